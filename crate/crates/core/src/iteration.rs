//! Picard iteration W# -> W for the axisymmetric perturbation problem and
//! residual checks of the resulting flow.

use alloc::vec::Vec;

use crate::background::{BackgroundProfile, GridBackground};
use crate::boundary::BoundaryPerturbation;
use crate::decomposition::bernoulli_density;
use crate::elliptic::{recover_deviation, CoupledBoundary, CoupledCoefficients, CoupledSolver, Psi1Solver};
use crate::grid::{d_r, d_rr, d_z_sym, d_zz_sym, interior_l2, interior_sup, Grid2D, Parity, ScalarField2D};
use crate::math::pow;
use crate::sparse::{Csr, LinearSolver};
use crate::transport::{eval_g_terms, solve_transport, DeviationField};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Sup-norm bound on every iterate; `None` means max(100 eps, 1e-8).
    pub delta_guard: Option<f64>,
    pub grid: Grid2D,
    pub solver: LinearSolver,
}

impl SolveOptions {
    pub fn new(grid: Grid2D) -> Self {
        Self { tol: 1e-10, max_iter: 100, delta_guard: None, grid, solver: LinearSolver::Auto }
    }

    pub fn guard_for(&self, eps: f64) -> f64 {
        self.delta_guard.unwrap_or_else(|| (100.0 * eps.abs()).max(1e-8))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput(alloc::format!("tol must be positive, got {}", self.tol)));
        }
        if let Some(d) = self.delta_guard {
            if !(d > 0.0) {
                return Err(Error::InvalidInput(alloc::format!("delta_guard must be positive, got {d}")));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sup and L2 norms of the six equations over interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FullResidual {
    pub sup: [f64; 6],
    pub l2: [f64; 6],
    pub fields: [ScalarField2D; 6],
}

impl FullResidual {
    pub const NAMES: [&'static str; 6] = ["continuity", "momentum_r", "momentum_theta", "momentum_x3", "entropy", "poisson"];

    pub fn max_sup(&self) -> f64 {
        self.sup.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub field: DeviationField,
    pub iterations: usize,
    /// sup-norm increment per iteration
    pub increments: Vec<f64>,
    /// C1 increment per iteration
    pub increments_c1: Vec<f64>,
    /// increments[k] / increments[k - 1]
    pub ratios: Vec<f64>,
    /// Geometric mean of the last three ratios.
    pub contraction_ratio: Option<f64>,
    pub residual: FullResidual,
}

/// Everything of one iteration that depends on the grid and background only.
#[derive(Debug, Clone)]
pub struct SchemeOperators {
    pub grid: Grid2D,
    pub background: GridBackground,
    psi1: Psi1Solver,
    coupled: CoupledSolver,
}

impl SchemeOperators {
    pub fn new(profile: &BackgroundProfile, grid: Grid2D, solver: LinearSolver) -> Result<Self> {
        if (grid.r0 - profile.r_nodes[0]).abs() > 1e-12 || grid.r1 > profile.r_nodes[profile.len() - 1] + 1e-12 {
            return Err(Error::InvalidInput("grid extends beyond the background profile".into()));
        }
        let background = GridBackground::sample(profile, &grid.radii())?;
        if let Some(i) = (0..background.len()).find(|&i| !(background.m1_sq(i) < 1.0)) {
            return Err(Error::RadialSonicDegeneracy { r: background.r[i], margin: 1.0 - background.m1_sq(i) });
        }
        let half = GridBackground::sample(profile, &grid.half_radii())?;
        let coeffs = CoupledCoefficients::from_background(&background, &half)?;
        Ok(Self {
            grid,
            background,
            psi1: Psi1Solver::new(grid, solver)?,
            coupled: CoupledSolver::new(grid, coeffs, solver)?,
        })
    }

    pub fn coefficients(&self) -> &CoupledCoefficients {
        &self.coupled.coeffs
    }

    pub fn coupled_matrix(&self) -> &Csr {
        self.coupled.matrix()
    }

    /// One sweep: transport, source terms, psi1, coupled (psi, phi), recovery.
    pub fn apply_map(&self, w_sharp: &DeviationField, boundary: &BoundaryPerturbation, guard: f64) -> Result<DeviationField> {
        let norm = w_sharp.sup_norm();
        if !(norm <= guard) {
            return Err(Error::TrustRegionExceeded { norm, guard });
        }
        let (grid, bg) = (&self.grid, &self.background);
        let (w2, w4, w5) = solve_transport(grid, bg, boundary, &w_sharp.w[0], &w_sharp.w[2])?;
        let g = eval_g_terms(grid, bg, boundary, w_sharp, &w2, &w4, &w5)?;
        let psi1 = self.psi1.solve(&g.g2)?;
        let dz_psi1 = d_z_sym(grid, &psi1, Parity::Odd);
        let dr_psi1 = d_r(grid, &psi1);

        let gm1 = bg.gamma - 1.0;
        let coeffs = &self.coupled.coeffs;
        let eps_blend = |i: usize, j: usize| boundary.phi1(grid.r0, grid.r1, grid.r(i), grid.z(j));
        let mut gt1 = ScalarField2D::zeros(grid);
        let mut gt3 = ScalarField2D::zeros(grid);
        let mut gt4 = ScalarField2D::zeros(grid);
        for j in 0..grid.nz {
            let z = grid.z(j);
            for i in 0..grid.nr {
                let r = grid.r(i);
                let (rho, u1, u2, c2) = (bg.rho[i], bg.u1[i], bg.u2[i], bg.c_sq[i]);
                let (a2, a4, a5) = (w2[(i, j)], w4[(i, j)], w5[(i, j)]);
                let phi1 = eps_blend(i, j);
                let g1 = r
                    * (g.g1[(i, j)] + rho * (1.0 - u1 * u1 / c2) * dz_psi1[(i, j)] + rho * u1 * u2 / c2 * a2
                        + rho * u1 * a4 / (gm1 * bg.a0)
                        - rho * u1 * a5 / c2);
                let g4 = r
                    * (g.g4[(i, j)] + rho * u1 * dz_psi1[(i, j)] / c2 - rho * u2 * a2 / c2 - rho * a4 / (gm1 * bg.a0)
                        + rho * a5 / c2);
                gt1[(i, j)] = g1 - coeffs.c[i] * phi1;
                gt3[(i, j)] = r * (g.g3[(i, j)] - rho * dr_psi1[(i, j)]);
                gt4[(i, j)] = g4 + coeffs.d[i] * phi1 - boundary.r_laplacian_phi1(grid.r0, grid.r1, r, z);
            }
        }
        let bc = CoupledBoundary::from_perturbation(grid, boundary);
        let (psi, phi) = self.coupled.solve(&gt1, &gt3, &gt4, &bc)?;
        let (w1, w3, w6) = recover_deviation(grid, &psi, &phi, &psi1, boundary);
        let out = DeviationField { w: [w1, w2, w3, w4, w5, w6] };
        let norm = out.sup_norm();
        if !(norm <= guard) {
            return Err(Error::TrustRegionExceeded { norm, guard });
        }
        Ok(out)
    }

    pub fn solve(&self, boundary: &BoundaryPerturbation, opts: &SolveOptions) -> Result<SolveReport> {
        opts.validate()?;
        let guard = opts.guard_for(boundary.eps);
        let mut w = DeviationField::zeros(&self.grid);
        let mut increments = Vec::new();
        let mut increments_c1 = Vec::new();
        let mut ratios = Vec::new();
        let mut growing = 0;
        for k in 1..=opts.max_iter {
            let next = self.apply_map(&w, boundary, guard)?;
            let delta = next.sub(&w);
            let inc = delta.sup_norm();
            increments.push(inc);
            increments_c1.push(delta.c1_norm(&self.grid));
            w = next;
            if k > 1 {
                let ratio = inc / increments[k - 2];
                ratios.push(ratio);
                if ratio >= 1.0 {
                    growing += 1;
                    if growing >= 5 {
                        return Err(Error::NoContraction { iteration: k, ratio });
                    }
                } else {
                    growing = 0;
                }
            }
            if inc <= opts.tol {
                let tail = &ratios[ratios.len().saturating_sub(3)..];
                let contraction_ratio = (!tail.is_empty())
                    .then(|| pow(tail.iter().product::<f64>(), 1.0 / tail.len() as f64));
                let residual = full_residual(&self.grid, &self.background, boundary, &w)?;
                return Ok(SolveReport { field: w, iterations: k, increments, increments_c1, ratios, contraction_ratio, residual });
            }
        }
        Err(Error::MaxIterExceeded { max_iter: opts.max_iter, increment: increments.last().copied().unwrap_or(f64::NAN) })
    }
}

pub fn apply_map(
    profile: &BackgroundProfile,
    grid: Grid2D,
    w_sharp: &DeviationField,
    boundary: &BoundaryPerturbation,
    guard: f64,
) -> Result<DeviationField> {
    SchemeOperators::new(profile, grid, LinearSolver::Auto)?.apply_map(w_sharp, boundary, guard)
}

/// Iterates from zero until the sup increment drops to `opts.tol`.
pub fn fixed_point_solve(profile: &BackgroundProfile, boundary: &BoundaryPerturbation, opts: &SolveOptions) -> Result<SolveReport> {
    SchemeOperators::new(profile, opts.grid, opts.solver)?.solve(boundary, opts)
}

/// Boundary layers left out of the residual norms. The first interior layer
/// sees the O(h) truncation of the boundary half cells.
pub const RESIDUAL_MARGIN: usize = 2;

struct TotalFlow {
    u1: ScalarField2D,
    u2: ScalarField2D,
    u3: ScalarField2D,
    a: ScalarField2D,
    phi: ScalarField2D,
    rho: ScalarField2D,
}

fn total_flow(grid: &Grid2D, bg: &GridBackground, w: &DeviationField) -> Result<TotalFlow> {
    let u1 = ScalarField2D::from_index_fn(grid, |i, j| bg.u1[i] + w.w[0][(i, j)]);
    let u2 = ScalarField2D::from_index_fn(grid, |i, j| bg.u2[i] + w.w[1][(i, j)]);
    let u3 = w.w[2].clone();
    let a = w.w[3].map(|v| bg.a0 + v);
    let k = w.w[4].map(|v| bg.k0 + v);
    let phi = ScalarField2D::from_index_fn(grid, |i, j| bg.phi[i] + w.w[5][(i, j)]);
    let mut rho = ScalarField2D::zeros(grid);
    for n in 0..grid.len() {
        let s = u1.data[n] * u1.data[n] + u2.data[n] * u2.data[n] + u3.data[n] * u3.data[n];
        rho.data[n] = bernoulli_density(bg.gamma, a.data[n], k.data[n], phi.data[n], s)?;
    }
    Ok(TotalFlow { u1, u2, u3, a, phi, rho })
}

/// Central-difference residuals of the axisymmetric Euler-Poisson system for
/// background plus deviation, with the density taken from the Bernoulli law.
/// Norms skip two layers of boundary nodes.
pub fn full_residual(grid: &Grid2D, bg: &GridBackground, boundary: &BoundaryPerturbation, w: &DeviationField) -> Result<FullResidual> {
    let f = total_flow(grid, bg, w)?;
    let gamma = bg.gamma;
    let dr = |x: &ScalarField2D| d_r(grid, x);
    let dz = |x: &ScalarField2D, p: Parity| d_z_sym(grid, x, p);
    let r = ScalarField2D::from_index_fn(grid, |i, _| grid.r(i));
    let pressure = f.a.zip_map(&f.rho, |a, rho| a * pow(rho, gamma));

    let m1 = ScalarField2D::from_index_fn(grid, |i, j| r[(i, j)] * f.rho[(i, j)] * f.u1[(i, j)]);
    let m3 = f.rho.zip_map(&f.u3, |a, b| a * b);
    let (dr_m1, dz_m3) = (dr(&m1), dz(&m3, Parity::Odd));
    let (dr_u1, dz_u1) = (dr(&f.u1), dz(&f.u1, Parity::Even));
    let (dr_u2, dz_u2) = (dr(&f.u2), dz(&f.u2, Parity::Even));
    let (dr_u3, dz_u3) = (dr(&f.u3), dz(&f.u3, Parity::Odd));
    let (dr_a, dz_a) = (dr(&f.a), dz(&f.a, Parity::Even));
    let (dr_p, dz_p) = (dr(&pressure), dz(&pressure, Parity::Even));
    let (dr_phi, dz_phi) = (dr(&f.phi), dz(&f.phi, Parity::Even));
    let (drr_phi, dzz_phi) = (d_rr(grid, &f.phi), d_zz_sym(grid, &f.phi, Parity::Even));

    let mut fields: [ScalarField2D; 6] = core::array::from_fn(|_| ScalarField2D::zeros(grid));
    for j in 0..grid.nz {
        let z = grid.z(j);
        for i in 0..grid.nr {
            let ri = grid.r(i);
            let (rho, u1, u2, u3) = (f.rho[(i, j)], f.u1[(i, j)], f.u2[(i, j)], f.u3[(i, j)]);
            let b = bg.b0 + boundary.eps * boundary.b_tilde.value(ri, z);
            fields[0][(i, j)] = dr_m1[(i, j)] / ri + dz_m3[(i, j)];
            fields[1][(i, j)] = rho * (u1 * dr_u1[(i, j)] + u3 * dz_u1[(i, j)] - u2 * u2 / ri) + dr_p[(i, j)]
                - rho * dr_phi[(i, j)];
            fields[2][(i, j)] = rho * (u1 * dr_u2[(i, j)] + u3 * dz_u2[(i, j)] + u1 * u2 / ri);
            fields[3][(i, j)] = rho * (u1 * dr_u3[(i, j)] + u3 * dz_u3[(i, j)]) + dz_p[(i, j)] - rho * dz_phi[(i, j)];
            fields[4][(i, j)] = u1 * dr_a[(i, j)] + u3 * dz_a[(i, j)];
            fields[5][(i, j)] = drr_phi[(i, j)] + dr_phi[(i, j)] / ri + dzz_phi[(i, j)] - (rho - b);
        }
    }
    let sup = core::array::from_fn(|k| interior_sup(grid, &fields[k], RESIDUAL_MARGIN));
    let l2 = core::array::from_fn(|k| interior_l2(grid, &fields[k], RESIDUAL_MARGIN));
    Ok(FullResidual { sup, l2, fields })
}

/// Spread of K, A and r U2 along streamlines of the total flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamlineReport {
    pub lines: usize,
    pub k_variation: f64,
    pub a_variation: f64,
    pub swirl_variation: f64,
}

impl StreamlineReport {
    pub fn max(&self) -> f64 {
        self.k_variation.max(self.a_variation).max(self.swirl_variation)
    }
}

/// RK4 substeps per radial cell when tracing streamlines forward.
const STREAMLINE_SUBSTEPS: usize = 4;

/// Four-point Lagrange weights at offset t from the second of four nodes.
fn cubic_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

fn stencil(s: f64, n: usize) -> (usize, f64) {
    let base = (s as usize).clamp(1, n - 3) - 1;
    (base, s - (base + 1) as f64)
}

/// Tensor-product cubic interpolation, stencils shifted inside at the edges.
pub fn interpolate_cubic(grid: &Grid2D, f: &ScalarField2D, r: f64, z: f64) -> f64 {
    let sr = ((r - grid.r0) / grid.hr()).clamp(0.0, (grid.nr - 1) as f64);
    let sz = ((z - grid.z0) / grid.hz()).clamp(0.0, (grid.nz - 1) as f64);
    let (i0, tr) = stencil(sr, grid.nr);
    let (j0, tz) = stencil(sz, grid.nz);
    let (wr, wz) = (cubic_weights(tr), cubic_weights(tz));
    let mut v = 0.0;
    for (b, wzb) in wz.iter().enumerate() {
        for (a, wra) in wr.iter().enumerate() {
            v += wzb * wra * f[(i0 + a, j0 + b)];
        }
    }
    v
}

/// Traces `lines` streamlines forward from r0, starting at evenly spaced
/// interior heights, and samples K, A, r U2 after every substep.
pub fn streamline_invariants(grid: &Grid2D, bg: &GridBackground, w: &DeviationField, lines: usize) -> Result<StreamlineReport> {
    let u1 = ScalarField2D::from_index_fn(grid, |i, j| bg.u1[i] + w.w[0][(i, j)]);
    let u3 = &w.w[2];
    let swirl = ScalarField2D::from_index_fn(grid, |i, j| grid.r(i) * (bg.u2[i] + w.w[1][(i, j)]));
    let slope = |r: f64, z: f64| -> Result<f64> {
        let v = interpolate_cubic(grid, &u1, r, z);
        if !(v >= crate::decomposition::VELOCITY_FLOOR) {
            return Err(Error::DegenerateRadialVelocity { value: v });
        }
        Ok(interpolate_cubic(grid, u3, r, z) / v)
    };
    let sample = |r: f64, z: f64| {
        [interpolate_cubic(grid, &w.w[4], r, z), interpolate_cubic(grid, &w.w[3], r, z), interpolate_cubic(grid, &swirl, r, z)]
    };
    let mut report = StreamlineReport { lines, k_variation: 0.0, a_variation: 0.0, swirl_variation: 0.0 };
    let steps = STREAMLINE_SUBSTEPS * (grid.nr - 1);
    let h = (grid.r1 - grid.r0) / steps as f64;
    for l in 0..lines {
        let mut z = -1.0 + (l as f64 + 0.5) * 2.0 / lines as f64;
        let mut r = grid.r0;
        let first = sample(r, z);
        let mut ranges = first.map(|v| [v, v]);
        for _ in 0..steps {
            let k1 = slope(r, z)?;
            let k2 = slope(r + 0.5 * h, (z + 0.5 * h * k1).clamp(-1.0, 1.0))?;
            let k3 = slope(r + 0.5 * h, (z + 0.5 * h * k2).clamp(-1.0, 1.0))?;
            let k4 = slope(r + h, (z + h * k3).clamp(-1.0, 1.0))?;
            z = (z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).clamp(-1.0, 1.0);
            r += h;
            for (range, v) in ranges.iter_mut().zip(sample(r, z)) {
                range[0] = range[0].min(v);
                range[1] = range[1].max(v);
            }
        }
        report.k_variation = report.k_variation.max(ranges[0][1] - ranges[0][0]);
        report.a_variation = report.a_variation.max(ranges[1][1] - ranges[1][0]);
        report.swirl_variation = report.swirl_variation.max(ranges[2][1] - ranges[2][0]);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::{integrate_background, InletData};
    use crate::boundary::BoundaryFn;
    use crate::math::{exp, sqrt};
    use alloc::vec;

    fn subsonic() -> BackgroundProfile {
        let inlet = InletData { gamma: 2.0, rho0: 1.0, u10: 0.5, u20: 0.5, a0: 1.0, e0: 0.1, b0: 0.5, r0: 1.0, r1: 2.0 };
        integrate_background(&inlet, 2049).unwrap()
    }

    fn data(eps: f64) -> BoundaryPerturbation {
        BoundaryPerturbation {
            eps,
            u2_en: BoundaryFn::CosPi(vec![0.2, 1.0]),
            u3_en: BoundaryFn::SinPi(vec![0.0, 1.0]),
            a_en: BoundaryFn::CosPi(vec![0.0, 0.5]),
            k_en: BoundaryFn::CosPi(vec![0.1, 0.0, 0.5]),
            phi_en: BoundaryFn::CosPi(vec![0.0, 0.3]),
            u1_ex: BoundaryFn::CosPi(vec![0.0, 0.4]),
            phi_ex: BoundaryFn::CosPi(vec![0.1, 0.2]),
            ..Default::default()
        }
    }

    fn ops(n: usize) -> SchemeOperators {
        SchemeOperators::new(&subsonic(), Grid2D::new(n, n, 1.0, 2.0).unwrap(), LinearSolver::Auto).unwrap()
    }

    #[test]
    fn zero_data_is_a_fixed_point() {
        let o = ops(17);
        let w = o.apply_map(&DeviationField::zeros(&o.grid), &BoundaryPerturbation::zero(), 1e-8).unwrap();
        assert_eq!(w.sup_norm(), 0.0);
        let rep = o.solve(&BoundaryPerturbation::zero(), &SolveOptions::new(o.grid)).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.field.sup_norm(), 0.0);
        assert_eq!(rep.contraction_ratio, None);
    }

    #[test]
    fn first_sweep_scales_with_eps() {
        let o = ops(17);
        let z = DeviationField::zeros(&o.grid);
        let a = o.apply_map(&z, &data(1e-3), 1.0).unwrap().sup_norm() / 1e-3;
        let b = o.apply_map(&z, &data(5e-4), 1.0).unwrap().sup_norm() / 5e-4;
        assert!(a > 0.0 && (a / b - 1.0).abs() < 1e-2, "{a} {b}");
    }

    #[test]
    fn guard_trips_on_large_data() {
        let o = ops(17);
        let guard = 1e-2;
        let mut w = DeviationField::zeros(&o.grid);
        w.w[3] = ScalarField2D::from_fn(&o.grid, |_, _| guard);
        let err = o.apply_map(&w, &data(0.2), guard).unwrap_err();
        assert!(matches!(err, Error::TrustRegionExceeded { .. }), "{err:?}");
        w.w[3] = ScalarField2D::from_fn(&o.grid, |_, _| 2.0 * guard);
        assert!(matches!(o.apply_map(&w, &data(0.0), guard), Err(Error::TrustRegionExceeded { .. })));
    }

    #[test]
    fn converged_sweep_is_wall_compatible() {
        let err = |n: usize| {
            let o = ops(n);
            let rep = o.solve(&data(1e-3), &SolveOptions::new(o.grid)).unwrap();
            rep.field.wall_compatibility(&o.grid)
        };
        let (a, b) = (err(17), err(33));
        assert!(a / b > 3.0, "{a} {b}");
    }

    #[test]
    fn small_eps_converges_linearly() {
        let o = ops(33);
        let opts = SolveOptions::new(o.grid);
        let a = o.solve(&data(1e-3), &opts).unwrap();
        let b = o.solve(&data(5e-4), &opts).unwrap();
        let q = a.contraction_ratio.unwrap();
        assert!(q < 0.5, "{q}");
        let (sa, sb) = (a.field.sup_norm() / 1e-3, b.field.sup_norm() / 5e-4);
        assert!((sa / sb - 1.0).abs() < 0.1, "{sa} {sb}");
        assert!(*a.increments.last().unwrap() <= opts.tol);
        assert!(a.field.sup_norm() <= opts.guard_for(1e-3));
    }

    #[test]
    fn transonic_background_converges() {
        let inlet = InletData { gamma: 2.0, rho0: 1.0, u10: 0.5, u20: 1.6, a0: 1.0, e0: 0.1, b0: 0.5, r0: 1.0, r1: 3.0 };
        let p = integrate_background(&inlet, 2049).unwrap();
        let o = SchemeOperators::new(&p, Grid2D::new(33, 33, 1.0, 3.0).unwrap(), LinearSolver::Auto).unwrap();
        let opts = SolveOptions::new(o.grid);
        let a = o.solve(&data(1e-3), &opts).unwrap();
        let b = o.solve(&data(5e-4), &opts).unwrap();
        assert!(a.contraction_ratio.unwrap() < 0.5);
        let (sa, sb) = (a.field.sup_norm() / 1e-3, b.field.sup_norm() / 5e-4);
        assert!((sa / sb - 1.0).abs() < 0.1, "{sa} {sb}");
    }

    #[test]
    fn large_eps_breaks_down() {
        let o = ops(17);
        let err = o.solve(&data(0.5), &SolveOptions::new(o.grid)).unwrap_err();
        assert!(
            matches!(
                err,
                Error::NoContraction { .. } | Error::TrustRegionExceeded { .. } | Error::DegenerateRadialVelocity { .. }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn options_are_validated() {
        let mut opts = SolveOptions::new(Grid2D::new(9, 9, 1.0, 2.0).unwrap());
        opts.tol = 0.0;
        assert!(opts.validate().is_err());
        opts.tol = 1e-8;
        opts.delta_guard = Some(-1.0);
        assert!(opts.validate().is_err());
        opts.delta_guard = None;
        assert_eq!(opts.guard_for(0.0), 1e-8);
        assert_eq!(opts.guard_for(1e-3), 0.1);
    }

    #[test]
    fn cubic_interpolation_is_exact_on_cubics() {
        let g = Grid2D::new(9, 9, 1.0, 2.0).unwrap();
        let f = ScalarField2D::from_fn(&g, |r, z| r * r * r - 2.0 * r * z * z + z * z * z);
        for (r, z) in [(1.03, -0.99), (1.51, 0.2), (1.97, 0.98)] {
            let exact = r * r * r - 2.0 * r * z * z + z * z * z;
            assert!((interpolate_cubic(&g, &f, r, z) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn background_residual_is_second_order() {
        let res = |n: usize| {
            let o = ops(n);
            full_residual(&o.grid, &o.background, &BoundaryPerturbation::zero(), &DeviationField::zeros(&o.grid))
                .unwrap()
                .max_sup()
        };
        let (a, b) = (res(33), res(65));
        let ratio = a / b;
        assert!((ratio - 4.0).abs() < 1.0, "{a} {b}");
    }

    #[test]
    fn momentum_bump_is_localised() {
        let o = ops(65);
        let g = o.grid;
        let (rc, zc) = (1.5, 0.3);
        let mut w = DeviationField::zeros(&g);
        w.w[1] = ScalarField2D::from_fn(&g, |r, z| 1e-3 * exp(-((r - rc) * (r - rc) + (z - zc) * (z - zc)) / 0.005));
        let res = full_residual(&g, &o.background, &BoundaryPerturbation::zero(), &w).unwrap();
        let f = &res.fields[2];
        let (mut best, mut at) = (0.0, (0, 0));
        for j in 1..g.nz - 1 {
            for i in 1..g.nr - 1 {
                if f[(i, j)].abs() > best {
                    best = f[(i, j)].abs();
                    at = (i, j);
                }
            }
        }
        let dist = sqrt((g.r(at.0) - rc).powi(2) + (g.z(at.1) - zc).powi(2));
        assert!(dist < 0.15, "peak at {at:?}");
        let background = full_residual(&g, &o.background, &BoundaryPerturbation::zero(), &DeviationField::zeros(&g)).unwrap();
        let far = ScalarField2D::from_index_fn(&g, |i, j| {
            let d = sqrt((g.r(i) - rc).powi(2) + (g.z(j) - zc).powi(2));
            if d > 0.5 { f[(i, j)] - background.fields[2][(i, j)] } else { 0.0 }
        });
        assert!(far.sup_norm() < 1e-3 * best, "{} {best}", far.sup_norm());
    }

    #[test]
    fn streamlines_carry_invariants() {
        let var = |n: usize| {
            let o = ops(n);
            let rep = o.solve(&data(1e-3), &SolveOptions::new(o.grid)).unwrap();
            streamline_invariants(&o.grid, &o.background, &rep.field, 20).unwrap().max()
        };
        let (a, b) = (var(33), var(65));
        assert!(a / b > 3.0, "{a} {b}");
    }

    #[test]
    fn uniform_shift_of_k_moves_only_bernoulli_dependent_equations() {
        let o = ops(17);
        let mut w = DeviationField::zeros(&o.grid);
        w.w[4] = ScalarField2D::from_fn(&o.grid, |_, _| 1e-3);
        let res = full_residual(&o.grid, &o.background, &BoundaryPerturbation::zero(), &w).unwrap();
        assert!(res.sup[4] < 1e-14);
    }
}
