//! Residual operators on full cylindrical fields: the steady Euler-Poisson
//! equations and the deformation-curl-Poisson set.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::background::BackgroundProfile;
use crate::math::pow;
use crate::{Error, Result};

/// Floor on the Bernoulli argument K + Phi - |U|^2 / 2.
pub const VACUUM_FLOOR: f64 = 1e-10;
/// Floor on U1 before dividing by it.
pub const VELOCITY_FLOOR: f64 = 1e-12;
/// Residual norms skip a band of 1/8 of the extent at each r and x3
/// boundary, at least two node layers.
pub fn norm_margin(n: usize) -> usize {
    ((n - 1) / 8).max(2)
}

/// rho = ((gamma - 1) / (gamma A) (K + Phi - |U|^2 / 2))^(1 / (gamma - 1))
pub fn bernoulli_density(gamma: f64, a: f64, k: f64, phi: f64, speed_sq: f64) -> Result<f64> {
    let arg = k + phi - 0.5 * speed_sq;
    if !(arg > VACUUM_FLOOR) {
        return Err(Error::VacuumState { value: arg });
    }
    if !(a > 0.0) {
        return Err(Error::InvalidInput(alloc::format!("entropy A = {a} must be positive")));
    }
    Ok(pow((gamma - 1.0) / (gamma * a) * arg, 1.0 / (gamma - 1.0)))
}

/// Tensor grid in (r, theta, x3); theta holds `nth` distinct periodic nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylGrid3D {
    pub nr: usize,
    pub nth: usize,
    pub nz: usize,
    pub r0: f64,
    pub r1: f64,
}

impl CylGrid3D {
    pub fn new(nr: usize, nth: usize, nz: usize, r0: f64, r1: f64) -> Result<Self> {
        if nr < 5 || nz < 5 || nth < 4 {
            return Err(Error::NotEnoughNodes { needed: 5, got: nr.min(nz).min(nth) });
        }
        if !(r0 > 0.0 && r1 > r0 && r1.is_finite()) {
            return Err(Error::InvalidInput(alloc::format!("bad radial extent [{r0}, {r1}]")));
        }
        Ok(Self { nr, nth, nz, r0, r1 })
    }

    /// n nodes in r and x3, n - 1 periodic nodes in theta, so refining n to
    /// 2n - 1 halves every spacing.
    pub fn cube(n: usize, r0: f64, r1: f64) -> Result<Self> {
        Self::new(n, n - 1, n, r0, r1)
    }

    pub fn hr(&self) -> f64 {
        (self.r1 - self.r0) / (self.nr - 1) as f64
    }

    pub fn hth(&self) -> f64 {
        2.0 * PI / self.nth as f64
    }

    pub fn hz(&self) -> f64 {
        2.0 / (self.nz - 1) as f64
    }

    pub fn r(&self, i: usize) -> f64 {
        if i + 1 == self.nr {
            self.r1
        } else {
            self.r0 + i as f64 * self.hr()
        }
    }

    pub fn theta(&self, k: usize) -> f64 {
        k as f64 * self.hth()
    }

    pub fn z(&self, j: usize) -> f64 {
        if j + 1 == self.nz {
            1.0
        } else {
            -1.0 + j as f64 * self.hz()
        }
    }

    #[inline]
    pub fn idx(&self, i: usize, k: usize, j: usize) -> usize {
        (j * self.nth + k) * self.nr + i
    }

    pub fn len(&self) -> usize {
        self.nr * self.nth * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn strides(&self) -> (usize, usize, usize) {
        (1, self.nr, self.nr * self.nth)
    }
}

/// Pointwise state used to build fields.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointState {
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
    pub rho: f64,
    pub a: f64,
    pub k: f64,
    pub phi: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CylField3D {
    pub grid: CylGrid3D,
    pub gamma: f64,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub u3: Vec<f64>,
    pub rho: Vec<f64>,
    pub a: Vec<f64>,
    pub k: Vec<f64>,
    pub phi: Vec<f64>,
    pub b: Vec<f64>,
}

impl CylField3D {
    pub fn from_fn(grid: CylGrid3D, gamma: f64, mut f: impl FnMut(f64, f64, f64) -> PointState) -> Self {
        let n = grid.len();
        let mut out = Self {
            grid,
            gamma,
            u1: vec![0.0; n],
            u2: vec![0.0; n],
            u3: vec![0.0; n],
            rho: vec![0.0; n],
            a: vec![0.0; n],
            k: vec![0.0; n],
            phi: vec![0.0; n],
            b: vec![0.0; n],
        };
        for j in 0..grid.nz {
            for k in 0..grid.nth {
                for i in 0..grid.nr {
                    let p = f(grid.r(i), grid.theta(k), grid.z(j));
                    let id = grid.idx(i, k, j);
                    out.u1[id] = p.u1;
                    out.u2[id] = p.u2;
                    out.u3[id] = p.u3;
                    out.rho[id] = p.rho;
                    out.a[id] = p.a;
                    out.k[id] = p.k;
                    out.phi[id] = p.phi;
                    out.b[id] = p.b;
                }
            }
        }
        out
    }

    /// The radial background as a theta- and x3-independent field; K is taken
    /// from its definition so that the density law holds node by node.
    pub fn lift_background(profile: &BackgroundProfile, grid: CylGrid3D) -> Result<Self> {
        if (grid.r0 - profile.r_nodes[0]).abs() > 1e-12 || (grid.r1 - profile.inlet.r1).abs() > 1e-12 {
            return Err(Error::InvalidInput("grid and profile radii differ".into()));
        }
        let gamma = profile.gamma();
        let a0 = profile.a_const;
        let mut states = Vec::with_capacity(grid.nr);
        for i in 0..grid.nr {
            let s = profile.state_at(grid.r(i))?;
            let k = 0.5 * (s.u1 * s.u1 + s.u2 * s.u2) + gamma * a0 * pow(s.rho, gamma - 1.0) / (gamma - 1.0)
                - s.phi;
            states.push(PointState {
                u1: s.u1,
                u2: s.u2,
                u3: 0.0,
                rho: s.rho,
                a: a0,
                k,
                phi: s.phi,
                b: profile.b0(),
            });
        }
        let hr = grid.hr();
        Ok(Self::from_fn(grid, gamma, |r, _, _| {
            let i = ((r - grid.r0) / hr + 0.5) as usize;
            states[i.min(grid.nr - 1)]
        }))
    }

    pub fn min_u1(&self) -> f64 {
        self.u1.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn require_u1(&self) -> Result<()> {
        let m = self.min_u1();
        if !(m >= VELOCITY_FLOOR) {
            return Err(Error::DegenerateRadialVelocity { value: m });
        }
        Ok(())
    }

    pub fn speed_sq(&self, id: usize) -> f64 {
        self.u1[id] * self.u1[id] + self.u2[id] * self.u2[id] + self.u3[id] * self.u3[id]
    }

    /// Density from the Bernoulli law at every node.
    pub fn bernoulli_rho(&self) -> Result<Vec<f64>> {
        (0..self.grid.len())
            .map(|id| bernoulli_density(self.gamma, self.a[id], self.k[id], self.phi[id], self.speed_sq(id)))
            .collect()
    }

    /// Sound speed squared in Bernoulli form, (gamma - 1)(K + Phi - |U|^2 / 2).
    pub fn c_sq_bernoulli(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|id| (self.gamma - 1.0) * (self.k[id] + self.phi[id] - 0.5 * self.speed_sq(id)))
            .collect()
    }

    /// Copy with theta indices rotated by `shift`.
    pub fn rotate_theta(&self, shift: usize) -> Self {
        let g = self.grid;
        let rot = |f: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; f.len()];
            for j in 0..g.nz {
                for k in 0..g.nth {
                    for i in 0..g.nr {
                        out[g.idx(i, (k + shift) % g.nth, j)] = f[g.idx(i, k, j)];
                    }
                }
            }
            out
        };
        Self {
            grid: g,
            gamma: self.gamma,
            u1: rot(&self.u1),
            u2: rot(&self.u2),
            u3: rot(&self.u3),
            rho: rot(&self.rho),
            a: rot(&self.a),
            k: rot(&self.k),
            phi: rot(&self.phi),
            b: rot(&self.b),
        }
    }
}

#[derive(Clone, Copy)]
enum Axis {
    R,
    Theta,
    Z,
}

/// First derivative along an axis: central inside, periodic in theta,
/// one-sided second order on the r and x3 boundaries.
fn d1(g: &CylGrid3D, f: &[f64], axis: Axis) -> Vec<f64> {
    let (sr, st, sz) = g.strides();
    let mut out = vec![0.0; f.len()];
    match axis {
        Axis::Theta => {
            let h2 = 2.0 * g.hth();
            for j in 0..g.nz {
                for k in 0..g.nth {
                    let kp = (k + 1) % g.nth;
                    let km = (k + g.nth - 1) % g.nth;
                    for i in 0..g.nr {
                        out[g.idx(i, k, j)] = (f[g.idx(i, kp, j)] - f[g.idx(i, km, j)]) / h2;
                    }
                }
            }
        }
        Axis::R | Axis::Z => {
            let (n, s, h) = match axis {
                Axis::R => (g.nr, sr, g.hr()),
                _ => (g.nz, sz, g.hz()),
            };
            let _ = st;
            for id in 0..f.len() {
                let pos = match axis {
                    Axis::R => id % g.nr,
                    _ => id / (g.nr * g.nth),
                };
                out[id] = if pos == 0 {
                    (-3.0 * f[id] + 4.0 * f[id + s] - f[id + 2 * s]) / (2.0 * h)
                } else if pos == n - 1 {
                    (3.0 * f[id] - 4.0 * f[id - s] + f[id - 2 * s]) / (2.0 * h)
                } else {
                    (f[id + s] - f[id - s]) / (2.0 * h)
                };
            }
        }
    }
    out
}

fn d2(g: &CylGrid3D, f: &[f64], axis: Axis) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    match axis {
        Axis::Theta => {
            let h2 = g.hth() * g.hth();
            for j in 0..g.nz {
                for k in 0..g.nth {
                    let kp = (k + 1) % g.nth;
                    let km = (k + g.nth - 1) % g.nth;
                    for i in 0..g.nr {
                        let id = g.idx(i, k, j);
                        out[id] = (f[g.idx(i, kp, j)] - 2.0 * f[id] + f[g.idx(i, km, j)]) / h2;
                    }
                }
            }
        }
        Axis::R | Axis::Z => {
            let (n, s, h) = match axis {
                Axis::R => (g.nr, 1, g.hr()),
                _ => (g.nz, g.nr * g.nth, g.hz()),
            };
            let h2 = h * h;
            for id in 0..f.len() {
                let pos = match axis {
                    Axis::R => id % g.nr,
                    _ => id / (g.nr * g.nth),
                };
                out[id] = if pos == 0 {
                    (2.0 * f[id] - 5.0 * f[id + s] + 4.0 * f[id + 2 * s] - f[id + 3 * s]) / h2
                } else if pos == n - 1 {
                    (2.0 * f[id] - 5.0 * f[id - s] + 4.0 * f[id - 2 * s] - f[id - 3 * s]) / h2
                } else {
                    (f[id + s] - 2.0 * f[id] + f[id - s]) / h2
                };
            }
        }
    }
    out
}

struct Grad {
    r: Vec<f64>,
    t: Vec<f64>,
    z: Vec<f64>,
}

fn grad(g: &CylGrid3D, f: &[f64]) -> Grad {
    Grad { r: d1(g, f, Axis::R), t: d1(g, f, Axis::Theta), z: d1(g, f, Axis::Z) }
}

fn radius_of(g: &CylGrid3D, id: usize) -> f64 {
    g.r(id % g.nr)
}

fn product(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// (U1 d_r + U2 / r d_theta + U3 d_x3) f at every node.
fn convective(field: &CylField3D, gf: &Grad) -> Vec<f64> {
    let g = &field.grid;
    (0..g.len())
        .map(|id| {
            let r = radius_of(g, id);
            field.u1[id] * gf.r[id] + field.u2[id] / r * gf.t[id] + field.u3[id] * gf.z[id]
        })
        .collect()
}

/// Residual of the continuity equation for a given density array.
fn continuity_with(field: &CylField3D, rho: &[f64]) -> Vec<f64> {
    let g = &field.grid;
    let f1 = product(rho, &field.u1);
    let f2 = product(rho, &field.u2);
    let f3 = product(rho, &field.u3);
    let d1r = d1(g, &f1, Axis::R);
    let d2t = d1(g, &f2, Axis::Theta);
    let d3z = d1(g, &f3, Axis::Z);
    (0..g.len())
        .map(|id| {
            let r = radius_of(g, id);
            d1r[id] + d2t[id] / r + f1[id] / r + d3z[id]
        })
        .collect()
}

fn laplacian(g: &CylGrid3D, f: &[f64]) -> Vec<f64> {
    let frr = d2(g, f, Axis::R);
    let fr = d1(g, f, Axis::R);
    let ftt = d2(g, f, Axis::Theta);
    let fzz = d2(g, f, Axis::Z);
    (0..g.len())
        .map(|id| {
            let r = radius_of(g, id);
            frr[id] + fr[id] / r + ftt[id] / (r * r) + fzz[id]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EulerPoissonResidual {
    pub continuity: Vec<f64>,
    pub mom_r: Vec<f64>,
    pub mom_theta: Vec<f64>,
    pub mom_z: Vec<f64>,
    pub entropy: Vec<f64>,
    pub bernoulli: Vec<f64>,
    pub poisson: Vec<f64>,
}

impl EulerPoissonResidual {
    pub const NAMES: [&'static str; 7] =
        ["continuity", "momentum_r", "momentum_theta", "momentum_z", "entropy", "bernoulli", "poisson"];

    pub fn parts(&self) -> [&[f64]; 7] {
        [
            &self.continuity,
            &self.mom_r,
            &self.mom_theta,
            &self.mom_z,
            &self.entropy,
            &self.bernoulli,
            &self.poisson,
        ]
    }
}

/// All seven equations with the field's own density and P = A rho^gamma.
pub fn euler_poisson_residual(field: &CylField3D) -> EulerPoissonResidual {
    let g = &field.grid;
    let n = g.len();
    let pressure: Vec<f64> = (0..n).map(|id| field.a[id] * pow(field.rho[id], field.gamma)).collect();
    let gp = grad(g, &pressure);
    let gphi = grad(g, &field.phi);
    let c1 = convective(field, &grad(g, &field.u1));
    let c2 = convective(field, &grad(g, &field.u2));
    let c3 = convective(field, &grad(g, &field.u3));
    let ca = convective(field, &grad(g, &field.a));
    let ck = convective(field, &grad(g, &field.k));
    let lap = laplacian(g, &field.phi);

    let mut res = EulerPoissonResidual {
        continuity: continuity_with(field, &field.rho),
        mom_r: vec![0.0; n],
        mom_theta: vec![0.0; n],
        mom_z: vec![0.0; n],
        entropy: vec![0.0; n],
        bernoulli: vec![0.0; n],
        poisson: vec![0.0; n],
    };
    for id in 0..n {
        let r = radius_of(g, id);
        let rho = field.rho[id];
        let (u1, u2) = (field.u1[id], field.u2[id]);
        res.mom_r[id] = rho * c1[id] + gp.r[id] - rho * u2 * u2 / r - rho * gphi.r[id];
        res.mom_theta[id] = rho * c2[id] + gp.t[id] / r + rho * u1 * u2 / r - rho * gphi.t[id] / r;
        res.mom_z[id] = rho * c3[id] + gp.z[id] - rho * gphi.z[id];
        res.entropy[id] = rho * ca[id];
        res.bernoulli[id] = rho * ck[id];
        res.poisson[id] = lap[id] - (rho - field.b[id]);
    }
    res
}

#[derive(Debug, Clone, PartialEq)]
pub struct VorticityField3D {
    pub omega1: Vec<f64>,
    pub omega2: Vec<f64>,
    pub omega3: Vec<f64>,
}

pub fn curl_field(field: &CylField3D) -> VorticityField3D {
    let g = &field.grid;
    let g1 = grad(g, &field.u1);
    let g2 = grad(g, &field.u2);
    let g3 = grad(g, &field.u3);
    let n = g.len();
    let mut w = VorticityField3D { omega1: vec![0.0; n], omega2: vec![0.0; n], omega3: vec![0.0; n] };
    for id in 0..n {
        let r = radius_of(g, id);
        w.omega1[id] = g3.t[id] / r - g2.z[id];
        w.omega2[id] = g1.z[id] - g3.r[id];
        w.omega3[id] = g2.r[id] - g1.t[id] / r + field.u2[id] / r;
    }
    w
}

/// (1/r) d_r(r w1) + (1/r) d_theta w2 + d_x3 w3
pub fn divergence(g: &CylGrid3D, w1: &[f64], w2: &[f64], w3: &[f64]) -> Vec<f64> {
    let a = d1(g, w1, Axis::R);
    let b = d1(g, w2, Axis::Theta);
    let c = d1(g, w3, Axis::Z);
    (0..g.len())
        .map(|id| {
            let r = radius_of(g, id);
            a[id] + w1[id] / r + b[id] / r + c[id]
        })
        .collect()
}

/// omega2 and omega3 from the momentum balance, with omega1 from the curl.
pub fn vorticity_algebraic(field: &CylField3D) -> Result<(Vec<f64>, Vec<f64>)> {
    field.require_u1()?;
    let g = &field.grid;
    let w1 = curl_field(field).omega1;
    let gk = grad(g, &field.k);
    let ga = grad(g, &field.a);
    let n = g.len();
    let (mut w2, mut w3) = (vec![0.0; n], vec![0.0; n]);
    let gm1 = field.gamma - 1.0;
    for id in 0..n {
        let r = radius_of(g, id);
        let rg = pow(field.rho[id], gm1) / gm1;
        let u1 = field.u1[id];
        w2[id] = (field.u2[id] * w1[id] + gk.z[id] - rg * ga.z[id]) / u1;
        w3[id] = (field.u3[id] * w1[id] - gk.t[id] / r + rg * ga.t[id] / r) / u1;
    }
    Ok((w2, w3))
}

/// M : D + c^2 U1 / r + U . grad(Phi), with c^2 in Bernoulli form.
pub fn deformation_residual(field: &CylField3D) -> Vec<f64> {
    let g = &field.grid;
    let g1 = grad(g, &field.u1);
    let g2 = grad(g, &field.u2);
    let g3 = grad(g, &field.u3);
    let gphi = grad(g, &field.phi);
    let c2 = field.c_sq_bernoulli();
    (0..g.len())
        .map(|id| {
            let r = radius_of(g, id);
            let u = [field.u1[id], field.u2[id], field.u3[id]];
            let d11 = g1.r[id];
            let d22 = g2.t[id] / r;
            let d33 = g3.z[id];
            let d12 = 0.5 * (g2.r[id] + g1.t[id] / r);
            let d13 = 0.5 * (g3.r[id] + g1.z[id]);
            let d23 = 0.5 * (g3.t[id] / r + g2.z[id]);
            let c = c2[id];
            let md = (c - u[0] * u[0]) * d11 + (c - u[1] * u[1]) * d22 + (c - u[2] * u[2]) * d33
                - 2.0 * (u[0] * u[1] * d12 + u[0] * u[2] * d13 + u[1] * u[2] * d23);
            let u_grad_phi = u[0] * gphi.r[id] + u[1] * gphi.t[id] / r + u[2] * gphi.z[id];
            md + c * u[0] / r + u_grad_phi
        })
        .collect()
}

/// Continuity with rho = H(A, K, Phi, |U|^2), scaled by c^2 / H and with the
/// K and A transport parts removed; equals the deformation form on any
/// smooth field up to truncation error.
pub fn continuity_h_expanded(field: &CylField3D) -> Result<Vec<f64>> {
    let g = &field.grid;
    let h = field.bernoulli_rho()?;
    let cont = continuity_with(field, &h);
    let c2 = field.c_sq_bernoulli();
    let uk = convective(field, &grad(g, &field.k));
    let ua = convective(field, &grad(g, &field.a));
    Ok((0..g.len())
        .map(|id| c2[id] / h[id] * cont[id] - uk[id] + c2[id] * ua[id] / ((field.gamma - 1.0) * field.a[id]))
        .collect())
}

/// (d_r + U2/(r U1) d_theta + U3/U1 d_x3) applied to K and to A.
pub fn transport_residuals(field: &CylField3D) -> Result<(Vec<f64>, Vec<f64>)> {
    field.require_u1()?;
    let g = &field.grid;
    let ck = convective(field, &grad(g, &field.k));
    let ca = convective(field, &grad(g, &field.a));
    Ok((
        ck.iter().zip(&field.u1).map(|(c, u)| c / u).collect(),
        ca.iter().zip(&field.u1).map(|(c, u)| c / u).collect(),
    ))
}

/// Transport identity for omega1 with the K and A source brackets.
pub fn omega1_transport_residual(field: &CylField3D) -> Result<Vec<f64>> {
    field.require_u1()?;
    let g = &field.grid;
    let n = g.len();
    let gm1 = field.gamma - 1.0;
    let w1 = curl_field(field).omega1;
    let gw = grad(g, &w1);
    let ratio2: Vec<f64> = (0..n).map(|id| field.u2[id] / field.u1[id]).collect();
    let ratio3: Vec<f64> = (0..n).map(|id| field.u3[id] / field.u1[id]).collect();
    let inv: Vec<f64> = field.u1.iter().map(|u| 1.0 / u).collect();
    let rg: Vec<f64> = (0..n).map(|id| pow(field.rho[id], gm1) / field.u1[id]).collect();
    let d_ratio2_t = d1(g, &ratio2, Axis::Theta);
    let d_ratio3_z = d1(g, &ratio3, Axis::Z);
    let g_inv = grad(g, &inv);
    let g_rg = grad(g, &rg);
    let gk = grad(g, &field.k);
    let ga = grad(g, &field.a);
    Ok((0..n)
        .map(|id| {
            let r = radius_of(g, id);
            let along = gw.r[id] + ratio2[id] / r * gw.t[id] + ratio3[id] * gw.z[id];
            let stretch = (1.0 / r + d_ratio2_t[id] / r + d_ratio3_z[id]) * w1[id];
            let k_part = g_inv.t[id] / r * gk.z[id] - g_inv.z[id] * gk.t[id] / r;
            let a_part = -g_rg.t[id] / r * ga.z[id] / gm1 + g_rg.z[id] * ga.t[id] / r / gm1;
            along + stretch + k_part + a_part
        })
        .collect())
}

/// Delta Phi - (H(A, K, Phi, |U|^2) - b)
pub fn poisson_residual(field: &CylField3D) -> Result<Vec<f64>> {
    let h = field.bernoulli_rho()?;
    let lap = laplacian(&field.grid, &field.phi);
    Ok((0..field.grid.len()).map(|id| lap[id] - (h[id] - field.b[id])).collect())
}

/// Residual arrays of the deformation-curl-Poisson set.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionResidual {
    pub deformation: Vec<f64>,
    pub omega1_transport: Vec<f64>,
    pub omega2_mismatch: Vec<f64>,
    pub omega3_mismatch: Vec<f64>,
    pub k_transport: Vec<f64>,
    pub a_transport: Vec<f64>,
    pub poisson: Vec<f64>,
}

impl DecompositionResidual {
    pub const NAMES: [&'static str; 7] = [
        "deformation",
        "omega1_transport",
        "omega2_curl",
        "omega3_curl",
        "k_transport",
        "a_transport",
        "poisson_h",
    ];

    pub fn parts(&self) -> [&[f64]; 7] {
        [
            &self.deformation,
            &self.omega1_transport,
            &self.omega2_mismatch,
            &self.omega3_mismatch,
            &self.k_transport,
            &self.a_transport,
            &self.poisson,
        ]
    }
}

pub fn decomposition_residual(field: &CylField3D) -> Result<DecompositionResidual> {
    let curl = curl_field(field);
    let (w2, w3) = vorticity_algebraic(field)?;
    let (k_transport, a_transport) = transport_residuals(field)?;
    Ok(DecompositionResidual {
        deformation: deformation_residual(field),
        omega1_transport: omega1_transport_residual(field)?,
        omega2_mismatch: curl.omega2.iter().zip(&w2).map(|(a, b)| a - b).collect(),
        omega3_mismatch: curl.omega3.iter().zip(&w3).map(|(a, b)| a - b).collect(),
        k_transport,
        a_transport,
        poisson: poisson_residual(field)?,
    })
}

/// Sup over the interior band in r and x3, all theta.
pub fn interior_sup3(g: &CylGrid3D, f: &[f64]) -> f64 {
    let (mr, mz) = (norm_margin(g.nr), norm_margin(g.nz));
    let mut m = 0.0_f64;
    for j in mz..g.nz - mz {
        for k in 0..g.nth {
            for i in mr..g.nr - mr {
                m = m.max(f[g.idx(i, k, j)].abs());
            }
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub euler_poisson: [f64; 7],
    pub decomposition: [f64; 7],
}

impl EquivalenceReport {
    pub fn max_euler_poisson(&self) -> f64 {
        self.euler_poisson.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_decomposition(&self) -> f64 {
        self.decomposition.iter().copied().fold(0.0, f64::max)
    }
}

/// Interior max-norms of both residual families. `forcing` holds continuous
/// residuals to subtract (manufactured fields), in the order of the two
/// families' `parts`.
pub fn equivalence_check_forced(
    field: &CylField3D,
    forcing: Option<(&EulerPoissonResidual, &DecompositionResidual)>,
) -> Result<EquivalenceReport> {
    let g = &field.grid;
    let ep = euler_poisson_residual(field);
    let dec = decomposition_residual(field)?;
    let norm = |a: &[f64], b: Option<&[f64]>| -> f64 {
        match b {
            Some(b) => {
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                interior_sup3(g, &d)
            }
            None => interior_sup3(g, a),
        }
    };
    let mut report = EquivalenceReport { euler_poisson: [0.0; 7], decomposition: [0.0; 7] };
    for (n, part) in ep.parts().iter().enumerate() {
        report.euler_poisson[n] = norm(part, forcing.map(|f| f.0.parts()[n]));
    }
    for (n, part) in dec.parts().iter().enumerate() {
        report.decomposition[n] = norm(part, forcing.map(|f| f.1.parts()[n]));
    }
    Ok(report)
}

pub fn equivalence_check(field: &CylField3D) -> Result<EquivalenceReport> {
    equivalence_check_forced(field, None)
}
