//! Characteristic transport of (r W2, W4, W5) and the nonlinear source terms
//! of the axisymmetric scheme.

use crate::background::GridBackground;
use crate::boundary::BoundaryPerturbation;
use crate::decomposition::{bernoulli_density, VELOCITY_FLOOR};
use crate::grid::{d_z_sym, Grid2D, Parity, ScalarField2D};
use crate::math::{ceil, pow};
use crate::{Error, Result};

/// Deviations (U1 - U1bar, U2 - U2bar, U3, A - A0, K - K0, Phi - Phibar).
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationField {
    pub w: [ScalarField2D; 6],
}

/// Parity of each deviation across the walls.
pub const DEVIATION_PARITY: [Parity; 6] =
    [Parity::Even, Parity::Even, Parity::Odd, Parity::Even, Parity::Even, Parity::Even];

impl DeviationField {
    pub fn zeros(grid: &Grid2D) -> Self {
        let z = ScalarField2D::zeros(grid);
        Self { w: [z.clone(), z.clone(), z.clone(), z.clone(), z.clone(), z] }
    }

    pub fn w1(&self) -> &ScalarField2D {
        &self.w[0]
    }
    pub fn w2(&self) -> &ScalarField2D {
        &self.w[1]
    }
    pub fn w3(&self) -> &ScalarField2D {
        &self.w[2]
    }
    pub fn w4(&self) -> &ScalarField2D {
        &self.w[3]
    }
    pub fn w5(&self) -> &ScalarField2D {
        &self.w[4]
    }
    pub fn w6(&self) -> &ScalarField2D {
        &self.w[5]
    }

    /// Max over the six components of the sup norm.
    pub fn sup_norm(&self) -> f64 {
        self.w.iter().map(|f| f.sup_norm()).fold(0.0, f64::max)
    }

    /// Max over the components of sup |f| + sup |d_r f| + sup |d_z f|.
    pub fn c1_norm(&self, grid: &Grid2D) -> f64 {
        self.w
            .iter()
            .map(|f| crate::grid::norms(grid, f, crate::grid::Weight::Plain).c1)
            .fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { w: core::array::from_fn(|k| self.w[k].sub(&other.w[k])) }
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|f| f.is_finite())
    }

    /// Largest wall violation of (W3, d_z^2 W3) = 0 and d_z(W1, W2, W4, W5, W6) = 0,
    /// measured with one-sided differences.
    pub fn wall_compatibility(&self, grid: &Grid2D) -> f64 {
        let top = grid.nz - 1;
        let h = grid.hz();
        let mut worst = 0.0_f64;
        for i in 0..grid.nr {
            let w3 = &self.w[2];
            worst = worst.max(w3[(i, 0)].abs()).max(w3[(i, top)].abs());
            for k in [0, 1, 3, 4, 5] {
                let f = &self.w[k];
                let lo = (-3.0 * f[(i, 0)] + 4.0 * f[(i, 1)] - f[(i, 2)]) / (2.0 * h);
                let hi = (3.0 * f[(i, top)] - 4.0 * f[(i, top - 1)] + f[(i, top - 2)]) / (2.0 * h);
                worst = worst.max(lo.abs()).max(hi.abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicFoot {
    pub r: f64,
    pub x3: f64,
    /// x3 where the backward characteristic meets r = r0.
    pub foot: f64,
    /// False if the path had to be clamped onto a wall.
    pub valid: bool,
}

/// Substeps per cell in the cell next to the inner cylinder.
const INNER_SUBSTEPS: usize = 4;

fn slope(grid: &Grid2D, u1: &ScalarField2D, w3: &ScalarField2D, r: f64, z: f64) -> Result<f64> {
    let u = u1.interpolate(grid, r, z);
    if !(u >= VELOCITY_FLOOR) {
        return Err(Error::DegenerateRadialVelocity { value: u });
    }
    Ok(w3.interpolate(grid, r, z) / u)
}

/// Backward RK4 on dx3/dr = W3 / U1 from (r, x3) to r0, one step per radial
/// cell and four in the innermost cell.
pub fn trace_characteristic(
    grid: &Grid2D,
    u1_total: &ScalarField2D,
    w3_sharp: &ScalarField2D,
    r: f64,
    x3: f64,
) -> Result<CharacteristicFoot> {
    trace_with_steps(grid, u1_total, w3_sharp, r, x3, 1, INNER_SUBSTEPS)
}

/// Same as `trace_characteristic` with `refine` steps per cell everywhere
/// and `inner` times more in the innermost cell.
pub fn trace_with_steps(
    grid: &Grid2D,
    u1_total: &ScalarField2D,
    w3_sharp: &ScalarField2D,
    r: f64,
    x3: f64,
    refine: usize,
    inner: usize,
) -> Result<CharacteristicFoot> {
    let hr = grid.hr();
    let mut valid = true;
    let mut clamp = |z: f64| -> f64 {
        if z > 1.0 || z < -1.0 {
            if (z.abs() - 1.0) > 1e-12 {
                valid = false;
            }
            z.clamp(-1.0, 1.0)
        } else {
            z
        }
    };
    let mut z = clamp(x3);
    let mut rc = r;
    while rc > grid.r0 {
        let cells_left = (rc - grid.r0) / hr;
        let (span, n) = if cells_left > 1.0 + 1e-9 {
            let s = rc - (grid.r0 + (ceil(cells_left) - 1.0) * hr);
            let s = if s < 1e-9 * hr { hr } else { s };
            (s, refine)
        } else {
            (rc - grid.r0, refine * inner)
        };
        let h = -span / n as f64;
        for _ in 0..n {
            let k1 = slope(grid, u1_total, w3_sharp, rc, z)?;
            let k2 = slope(grid, u1_total, w3_sharp, rc + 0.5 * h, clamp(z + 0.5 * h * k1))?;
            let k3 = slope(grid, u1_total, w3_sharp, rc + 0.5 * h, clamp(z + 0.5 * h * k2))?;
            let k4 = slope(grid, u1_total, w3_sharp, rc + h, clamp(z + h * k3))?;
            z = clamp(z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
            rc += h;
        }
        if rc - grid.r0 < 1e-12 * hr {
            rc = grid.r0;
        }
    }
    Ok(CharacteristicFoot { r, x3, foot: z, valid })
}

/// Total radial velocity U1bar + W1.
pub fn total_u1(grid: &Grid2D, bg: &GridBackground, w1: &ScalarField2D) -> ScalarField2D {
    ScalarField2D::from_index_fn(grid, |i, j| bg.u1[i] + w1[(i, j)])
}

/// Feet of the backward characteristics through every node.
pub fn characteristic_feet(grid: &Grid2D, u1_total: &ScalarField2D, w3_sharp: &ScalarField2D) -> Result<ScalarField2D> {
    let min = u1_total.data.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min >= VELOCITY_FLOOR) {
        return Err(Error::DegenerateRadialVelocity { value: min });
    }
    let mut feet = ScalarField2D::zeros(grid);
    let straight = w3_sharp.data.iter().all(|v| *v == 0.0);
    for j in 0..grid.nz {
        for i in 0..grid.nr {
            feet[(i, j)] = if i == 0 || straight {
                grid.z(j)
            } else {
                trace_characteristic(grid, u1_total, w3_sharp, grid.r(i), grid.z(j))?.foot
            };
        }
    }
    Ok(feet)
}

/// W2, W4, W5 from the inflow data carried along the characteristics of
/// (U1bar + W1, W3).
pub fn solve_transport(
    grid: &Grid2D,
    bg: &GridBackground,
    boundary: &BoundaryPerturbation,
    w1_sharp: &ScalarField2D,
    w3_sharp: &ScalarField2D,
) -> Result<(ScalarField2D, ScalarField2D, ScalarField2D)> {
    let u1 = total_u1(grid, bg, w1_sharp);
    let feet = characteristic_feet(grid, &u1, w3_sharp)?;
    Ok(transported_values(grid, boundary, &feet))
}

pub fn transported_values(
    grid: &Grid2D,
    boundary: &BoundaryPerturbation,
    feet: &ScalarField2D,
) -> (ScalarField2D, ScalarField2D, ScalarField2D) {
    let eps = boundary.eps;
    let w2 = ScalarField2D::from_index_fn(grid, |i, j| {
        grid.r0 * eps * boundary.u2_en.value(feet[(i, j)]) / grid.r(i)
    });
    let w4 = feet.map(|z| eps * boundary.a_en.value(z));
    let w5 = feet.map(|z| eps * boundary.k_en.value(z));
    (w2, w4, w5)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GTerms {
    pub g1: ScalarField2D,
    pub g2: ScalarField2D,
    pub g3: ScalarField2D,
    pub g4: ScalarField2D,
    /// H - Hbar at every node, kept for the residual checks.
    pub density_gap: ScalarField2D,
}

/// Pointwise source terms. The density and the linearisation bracket use
/// (W1#, W3#, W6#) from the previous iterate with the fresh (W2, W4, W5).
pub fn eval_g_terms(
    grid: &Grid2D,
    bg: &GridBackground,
    boundary: &BoundaryPerturbation,
    w_sharp: &DeviationField,
    w2: &ScalarField2D,
    w4: &ScalarField2D,
    w5: &ScalarField2D,
) -> Result<GTerms> {
    let gamma = bg.gamma;
    let gm1 = gamma - 1.0;
    let (w1s, w3s, w6s) = (&w_sharp.w[0], &w_sharp.w[2], &w_sharp.w[5]);
    let dz_w2 = d_z_sym(grid, w2, Parity::Even);
    let dz_w4 = d_z_sym(grid, w4, Parity::Even);
    let dz_w5 = d_z_sym(grid, w5, Parity::Even);
    let mut out = GTerms {
        g1: ScalarField2D::zeros(grid),
        g2: ScalarField2D::zeros(grid),
        g3: ScalarField2D::zeros(grid),
        g4: ScalarField2D::zeros(grid),
        density_gap: ScalarField2D::zeros(grid),
    };
    for j in 0..grid.nz {
        let z = grid.z(j);
        for i in 0..grid.nr {
            let r = grid.r(i);
            let (rho_bar, u1_bar, u2_bar, c2) = (bg.rho[i], bg.u1[i], bg.u2[i], bg.c_sq[i]);
            let (a1, a2, a3, a4, a5, a6) = (w1s[(i, j)], w2[(i, j)], w3s[(i, j)], w4[(i, j)], w5[(i, j)], w6s[(i, j)]);
            let u1 = u1_bar + a1;
            let u2 = u2_bar + a2;
            if !(u1 >= VELOCITY_FLOOR) {
                return Err(Error::DegenerateRadialVelocity { value: u1 });
            }
            let h = bernoulli_density(gamma, a4 + bg.a0, a5 + bg.k0, a6 + bg.phi[i], u1 * u1 + u2 * u2 + a3 * a3)?;
            let gap = h - rho_bar;
            let bracket = gap + rho_bar * a4 / (gm1 * bg.a0) - rho_bar * a5 / c2 - rho_bar * a6 / c2
                + rho_bar * u1_bar * a1 / c2
                + rho_bar * u2_bar * a2 / c2;
            out.density_gap[(i, j)] = gap;
            out.g1[(i, j)] = -gap * a1 - bracket * u1_bar;
            out.g2[(i, j)] = (u2 * dz_w2[(i, j)] + pow(h, gm1) * dz_w4[(i, j)] / gm1 - dz_w5[(i, j)]) / u1;
            out.g3[(i, j)] = -gap * a3;
            out.g4[(i, j)] = bracket - boundary.eps * boundary.b_tilde.value(r, z);
        }
    }
    Ok(out)
}
