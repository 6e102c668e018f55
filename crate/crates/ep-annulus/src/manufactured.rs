//! Closed-form smooth 3D states and their exact continuous residuals,
//! evaluated with nested dual numbers.

use ep_annulus_core::decomposition::{CylField3D, CylGrid3D, DecompositionResidual, EulerPoissonResidual, PointState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dual::{seed2, Real, D1, D2};

/// Number of free amplitudes in `SmoothField3D`.
pub const N_PARAMS: usize = 10;

/// u1 = 1 + c0 sin(t + c9) cos z + 0.1 r, u2 = 0.3 r + c1 cos 2t (1 + z^2),
/// u3 = c2 sin(t - c9) sin(z/2 + r), rho = 1 + c3 cos t exp(-z^2) + c4 r,
/// A = 1 + c5 sin(t + z), K = 3 + c6 cos(t + r) z, Phi = 0.1 r^2 + c7 z sin t,
/// b = 0.5 + c8 r cos t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothField3D {
    pub gamma: f64,
    pub c: [f64; N_PARAMS],
}

/// Exact values of the two vector-calculus identities at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityGaps {
    /// div curl U
    pub div_curl: f64,
    /// omega1 transport identity minus div of (omega1, algebraic omega2, omega3)
    pub omega1_gap: f64,
    /// size of the terms entering omega1_gap, for relative checks
    pub omega1_scale: f64,
}

impl SmoothField3D {
    pub fn preset() -> Self {
        Self { gamma: 1.4, c: [0.2, 0.1, 0.2, 0.2, 0.05, 0.1, 0.2, 0.05, 0.1, 0.3] }
    }

    /// Amplitudes uniform in [-0.2, 0.2], gamma uniform in [1.2, 2.5].
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gamma = rng.gen_range(1.2..2.5);
        Self { gamma, c: std::array::from_fn(|_| rng.gen_range(-0.2..0.2)) }
    }

    pub fn from_params(gamma: f64, params: &[f64]) -> Option<Self> {
        let c: [f64; N_PARAMS] = params.try_into().ok()?;
        Some(Self { gamma, c })
    }

    /// (u1, u2, u3, rho, A, K, Phi, b)
    pub fn state<T: Real>(&self, r: T, t: T, z: T) -> [T; 8] {
        let c = &self.c;
        let one = T::cst(1.0);
        [
            (t.plus(c[9])).sin() * z.cos() * T::cst(c[0]) + r.scale(0.1) + one,
            r.scale(0.3) + (t.scale(2.0)).cos() * (z * z + one) * T::cst(c[1]),
            (t.plus(-c[9])).sin() * (z.scale(0.5) + r).sin() * T::cst(c[2]),
            t.cos() * (-(z * z)).exp() * T::cst(c[3]) + r.scale(c[4]) + one,
            (t + z).sin().scale(c[5]) + one,
            (t + r).cos() * z * T::cst(c[6]) + T::cst(3.0),
            (r * r).scale(0.1) + t.sin() * z * T::cst(c[7]),
            r * t.cos() * T::cst(c[8]) + T::cst(0.5),
        ]
    }

    pub fn sample(&self, grid: CylGrid3D) -> CylField3D {
        CylField3D::from_fn(grid, self.gamma, |r, t, z| {
            let [u1, u2, u3, rho, a, k, phi, b] = self.state::<f64>(r, t, z);
            PointState { u1, u2, u3, rho, a, k, phi, b }
        })
    }

    fn jets(&self, r: f64, t: f64, z: f64) -> [D2; 8] {
        let [x0, x1, x2] = seed2([r, t, z]);
        self.state(x0, x1, x2)
    }

    /// Continuous residuals of both equation families at one point, in the
    /// order of their `parts`.
    pub fn point_residuals(&self, r: f64, t: f64, z: f64) -> ([f64; 7], [f64; 7]) {
        let s = self.jets(r, t, z);
        let gamma = self.gamma;
        let gm1 = gamma - 1.0;
        let [u1, u2, u3, rho, a, k, phi, b] = s.map(|f| f.v);
        let d = |f: D2, i: usize| f.d[i];
        let rr = D1::var(r, 0);
        let conv = |f: D2| u1 * d(f, 0) + u2 / rr * d(f, 1) + u3 * d(f, 2);
        let [su1, su2, su3, _, sa, sk, sphi, _] = s;

        let p = a * rho.powf(gamma);
        let m1 = rho * u1;
        let m2 = rho * u2;
        let m3 = rho * u3;
        let lap = sphi.d[0].d[0] + sphi.d[0].v / r + sphi.d[1].d[1] / (r * r) + sphi.d[2].d[2];
        let ep = [
            m1.d[0] + m2.d[1] / r + m1.v / r + m3.d[2],
            (rho * conv(su1)).v + p.d[0] - (rho * u2 * u2).v / r - rho.v * phi.d[0],
            (rho * conv(su2)).v + p.d[1] / r + (rho * u1 * u2).v / r - rho.v * phi.d[1] / r,
            (rho * conv(su3)).v + p.d[2] - rho.v * phi.d[2],
            (rho * conv(sa)).v,
            (rho * conv(sk)).v,
            lap - (rho.v - b.v),
        ];

        let speed_sq = u1 * u1 + u2 * u2 + u3 * u3;
        let c2 = (k + phi - speed_sq.scale(0.5)).scale(gm1).v;
        let (du1, du2, du3) = (u1.d, u2.d, u3.d);
        let d11 = du1[0];
        let d22 = du2[1] / r;
        let d33 = du3[2];
        let d12 = 0.5 * (du2[0] + du1[1] / r);
        let d13 = 0.5 * (du3[0] + du1[2]);
        let d23 = 0.5 * (du3[1] / r + du2[2]);
        let (v1, v2, v3) = (u1.v, u2.v, u3.v);
        let deformation = (c2 - v1 * v1) * d11 + (c2 - v2 * v2) * d22 + (c2 - v3 * v3) * d33
            - 2.0 * (v1 * v2 * d12 + v1 * v3 * d13 + v2 * v3 * d23)
            + c2 * v1 / r
            + v1 * phi.d[0]
            + v2 * phi.d[1] / r
            + v3 * phi.d[2];

        let w1 = d(su3, 1) / rr - d(su2, 2);
        let ratio2 = u2 / u1;
        let ratio3 = u3 / u1;
        let inv = D1::cst(1.0) / u1;
        let rg = rho.powf(gm1) / u1;
        let along = w1.d[0] + ratio2.v / r * w1.d[1] + ratio3.v * w1.d[2];
        let stretch = (1.0 / r + ratio2.d[1] / r + ratio3.d[2]) * w1.v;
        let k_part = inv.d[1] / r * k.d[2] - inv.d[2] * k.d[1] / r;
        let a_part = -rg.d[1] / r * a.d[2] / gm1 + rg.d[2] * a.d[1] / r / gm1;
        let omega1_transport = along + stretch + k_part + a_part;

        let rgv = rho.v.powf(gm1) / gm1;
        let w2_alg = (v2 * w1.v + k.d[2] - rgv * a.d[2]) / v1;
        let w3_alg = (v3 * w1.v - k.d[1] / r + rgv * a.d[1] / r) / v1;
        let w2_curl = du1[2] - du3[0];
        let w3_curl = du2[0] - du1[1] / r + v2 / r;
        let h = ((k + phi - speed_sq.scale(0.5)) * D1::cst(gm1 / gamma) / a).powf(1.0 / gm1).v;
        let dec = [
            deformation,
            omega1_transport,
            w2_curl - w2_alg,
            w3_curl - w3_alg,
            conv(sk).v / v1,
            conv(sa).v / v1,
            lap - (h - b.v),
        ];
        (ep, dec)
    }

    /// Exact residual arrays at the nodes of `grid`.
    pub fn exact_residuals(&self, grid: &CylGrid3D) -> (EulerPoissonResidual, DecompositionResidual) {
        let n = grid.len();
        let mut ep: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
        let mut dec: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
        for j in 0..grid.nz {
            for kk in 0..grid.nth {
                for i in 0..grid.nr {
                    let id = grid.idx(i, kk, j);
                    let (a, b) = self.point_residuals(grid.r(i), grid.theta(kk), grid.z(j));
                    for q in 0..7 {
                        ep[q][id] = a[q];
                        dec[q][id] = b[q];
                    }
                }
            }
        }
        let [continuity, mom_r, mom_theta, mom_z, entropy, bernoulli, poisson] = ep;
        let [deformation, omega1_transport, omega2_mismatch, omega3_mismatch, k_transport, a_transport, poisson_h] = dec;
        (
            EulerPoissonResidual { continuity, mom_r, mom_theta, mom_z, entropy, bernoulli, poisson },
            DecompositionResidual {
                deformation,
                omega1_transport,
                omega2_mismatch,
                omega3_mismatch,
                k_transport,
                a_transport,
                poisson: poisson_h,
            },
        )
    }

    /// div curl U and the omega1 identity gap, both zero for any smooth field.
    pub fn identity_gaps(&self, r: f64, t: f64, z: f64) -> IdentityGaps {
        let s = self.jets(r, t, z);
        let gm1 = self.gamma - 1.0;
        let rr = D1::var(r, 0);
        let [su1, su2, su3, srho, sa, sk, _, _] = s;
        let (u1, u2, u3, rho) = (su1.v, su2.v, su3.v, srho.v);
        let w1 = su3.d[1] / rr - su2.d[2];
        let w2 = su1.d[2] - su3.d[0];
        let w3 = su2.d[0] - su1.d[1] / rr + su2.v / rr;
        let div = |x: D1, y: D1, z3: D1| x.d[0] + x.v / r + y.d[1] / r + z3.d[2];

        let rg = rho.powf(gm1) / D1::cst(gm1);
        let (k_t, k_z, a_t, a_z) = (sk.d[1], sk.d[2], sa.d[1], sa.d[2]);
        let w2_alg = (u2 * w1 + k_z - rg * a_z) / u1;
        let w3_alg = (u3 * w1 - k_t / rr + rg * a_t / rr) / u1;
        let div_alg = div(w1, w2_alg, w3_alg);
        let (_, dec) = self.point_residuals(r, t, z);
        IdentityGaps {
            div_curl: div(w1, w2, w3),
            omega1_gap: dec[1] - div_alg,
            omega1_scale: dec[1].abs() + div_alg.abs() + w1.d[0].abs() + w1.v.abs(),
        }
    }
}
