//! Elliptic half of the scheme: the psi1 Poisson problem on the reflected
//! section, the coupled (psi, phi) system and recovery of (W1, W3, W6).

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::background::{BackgroundProfile, GridBackground};
use crate::boundary::BoundaryPerturbation;
use crate::grid::{d_r, d_z_sym, extend_symmetric, restrict_extended, Grid2D, Parity, ScalarField2D};
use crate::math::{cos, sin};
use crate::sparse::{Csr, LinearSolver, PreparedSolver, SparseSystem};
use crate::{Error, Result};
use core::f64::consts::PI;

/// r rho (1 - M1^2), r rho, r rho U1 / c^2 and r rho / c^2 of the background.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledCoefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    /// a and c at the radial midpoints r_{i+1/2}.
    pub a_half: Vec<f64>,
    pub c_half: Vec<f64>,
}

impl CoupledCoefficients {
    pub fn from_background(node: &GridBackground, half: &GridBackground) -> Result<Self> {
        let coef = |bg: &GridBackground, i: usize| -> [f64; 4] {
            let (r, rho, c2) = (bg.r[i], bg.rho[i], bg.c_sq[i]);
            [r * rho * (1.0 - bg.m1_sq(i)), r * rho, r * rho * bg.u1[i] / c2, r * rho / c2]
        };
        let nodes: Vec<[f64; 4]> = (0..node.len()).map(|i| coef(node, i)).collect();
        let halves: Vec<[f64; 4]> = (0..half.len()).map(|i| coef(half, i)).collect();
        let out = Self {
            a: nodes.iter().map(|v| v[0]).collect(),
            b: nodes.iter().map(|v| v[1]).collect(),
            c: nodes.iter().map(|v| v[2]).collect(),
            d: nodes.iter().map(|v| v[3]).collect(),
            a_half: halves.iter().map(|v| v[0]).collect(),
            c_half: halves.iter().map(|v| v[2]).collect(),
        };
        out.check_ellipticity()?;
        Ok(out)
    }

    pub fn from_profile(profile: &BackgroundProfile, grid: &Grid2D) -> Result<Self> {
        let node = GridBackground::sample(profile, &grid.radii())?;
        let half = GridBackground::sample(profile, &grid.half_radii())?;
        Self::from_background(&node, &half)
    }

    /// Coefficients from closed-form functions of r returning [a, b, c, d].
    pub fn from_fn(grid: &Grid2D, f: impl Fn(f64) -> [f64; 4]) -> Result<Self> {
        let nodes: Vec<[f64; 4]> = grid.radii().into_iter().map(&f).collect();
        let halves: Vec<[f64; 4]> = grid.half_radii().into_iter().map(&f).collect();
        let out = Self {
            a: nodes.iter().map(|v| v[0]).collect(),
            b: nodes.iter().map(|v| v[1]).collect(),
            c: nodes.iter().map(|v| v[2]).collect(),
            d: nodes.iter().map(|v| v[3]).collect(),
            a_half: halves.iter().map(|v| v[0]).collect(),
            c_half: halves.iter().map(|v| v[2]).collect(),
        };
        out.check_ellipticity()?;
        Ok(out)
    }

    /// Smallest of a, b, d over nodes and midpoints.
    pub fn min_ellipticity(&self) -> f64 {
        self.a.iter().chain(&self.a_half).chain(&self.b).chain(&self.d).copied().fold(f64::INFINITY, f64::min)
    }

    pub fn check_ellipticity(&self) -> Result<()> {
        let m = self.min_ellipticity();
        if !(m > 0.0) {
            return Err(Error::InvalidInput(alloc::format!("coupled coefficients lose positivity ({m})")));
        }
        Ok(())
    }
}

/// Dirichlet data for psi at r0 and the radial derivative of psi at r1, one
/// value per x3 node.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledBoundary {
    pub psi_r0: Vec<f64>,
    pub dpsi_r1: Vec<f64>,
}

/// Trapezoid subintervals per grid cell when integrating u3_en.
const U3_SUBSTEPS: usize = 8;

impl CoupledBoundary {
    pub fn zero(grid: &Grid2D) -> Self {
        Self { psi_r0: vec![0.0; grid.nz], dpsi_r1: vec![0.0; grid.nz] }
    }

    /// psi(r0, x3) = eps * int_{-1}^{x3} u3_en, shifted so psi(r0, 0) = 0;
    /// d_r psi(r1, x3) = eps * u1_ex(x3).
    pub fn from_perturbation(grid: &Grid2D, boundary: &BoundaryPerturbation) -> Self {
        let eps = boundary.eps;
        let f = |z: f64| boundary.u3_en.value(z);
        let integral = |a: f64, b: f64, n: usize| -> f64 {
            if n == 0 {
                return 0.0;
            }
            let h = (b - a) / n as f64;
            let mut s = 0.5 * (f(a) + f(b));
            for k in 1..n {
                s += f(a + k as f64 * h);
            }
            s * h
        };
        let mut cumulative = vec![0.0; grid.nz];
        for j in 1..grid.nz {
            cumulative[j] = cumulative[j - 1] + integral(grid.z(j - 1), grid.z(j), U3_SUBSTEPS);
        }
        let half_cells = (grid.nz - 1).div_ceil(2);
        let at_zero = integral(-1.0, 0.0, U3_SUBSTEPS * half_cells);
        Self {
            psi_r0: cumulative.iter().map(|v| eps * (v - at_zero)).collect(),
            dpsi_r1: (0..grid.nz).map(|j| eps * boundary.u1_ex.value(grid.z(j))).collect(),
        }
    }
}

/// Row-major index of psi(i, j); phi(i, j) sits `grid.len()` further.
fn psi_index(grid: &Grid2D, i: usize, j: usize) -> usize {
    grid.idx(i, j)
}

fn phi_index(grid: &Grid2D, i: usize, j: usize) -> usize {
    grid.len() + grid.idx(i, j)
}

/// Interleaved node ordering (psi, phi per node) with bandwidth 2 nr + 1.
pub fn coupled_permutation(grid: &Grid2D) -> Vec<usize> {
    let n = grid.len();
    (0..2 * n).map(|k| if k < n { 2 * k } else { 2 * (k - n) + 1 }).collect()
}

/// Finite-volume assembly of
///   d_r(a psi_r) + d_3(b psi_3) + d_r(c phi) = d_r G1 + d_3 G3,
///   d_r(r phi_r) + d_3(r phi_3) + c psi_r - d phi = G4,
/// with half cells on the boundary, both rows negated so that the symmetric
/// part is positive definite. Dirichlet unknowns (psi at r0, phi at r0 and r1)
/// become identity rows and are eliminated from the other rows.
pub fn assemble_coupled(
    coeffs: &CoupledCoefficients,
    gt1: &ScalarField2D,
    gt3: &ScalarField2D,
    gt4: &ScalarField2D,
    boundary: &CoupledBoundary,
    grid: &Grid2D,
) -> SparseSystem {
    let (nr, nz) = (grid.nr, grid.nz);
    let (hr, hz) = (grid.hr(), grid.hz());
    let mut sys = SparseSystem::new(2 * grid.len());
    let dirichlet = |col: usize| -> Option<f64> {
        if col < grid.len() {
            let (i, j) = (col % nr, col / nr);
            (i == 0).then(|| boundary.psi_r0[j])
        } else {
            let i = (col - grid.len()) % nr;
            (i == 0 || i == nr - 1).then_some(0.0)
        }
    };
    let add = |sys: &mut SparseSystem, row: usize, col: usize, v: f64| {
        if v == 0.0 {
            return;
        }
        match dirichlet(col) {
            Some(value) => sys.rhs[row] -= v * value,
            None => sys.push(row, col, v),
        }
    };
    let half_source = |f: &ScalarField2D, i: usize, j: usize| 0.5 * (f[(i, j)] + f[(i + 1, j)]);
    let up_source = |f: &ScalarField2D, i: usize, j: usize| 0.5 * (f[(i, j)] + f[(i, j + 1)]);

    for j in 0..nz {
        let dz = grid.wz(j);
        for i in 0..nr {
            let dr = grid.wr(i);
            let r = grid.r(i);
            let row = psi_index(grid, i, j);
            if i == 0 {
                sys.push(row, row, 1.0);
                sys.rhs[row] = boundary.psi_r0[j];
            } else {
                // left face
                let (al, cl) = (coeffs.a_half[i - 1], coeffs.c_half[i - 1]);
                add(&mut sys, row, row, dz * al / hr);
                add(&mut sys, row, psi_index(grid, i - 1, j), -dz * al / hr);
                add(&mut sys, row, phi_index(grid, i - 1, j), dz * cl / 2.0);
                add(&mut sys, row, phi_index(grid, i, j), dz * cl / 2.0);
                sys.rhs[row] += dz * half_source(gt1, i - 1, j);
                // right face
                if i + 1 < nr {
                    let (ar, cr) = (coeffs.a_half[i], coeffs.c_half[i]);
                    add(&mut sys, row, row, dz * ar / hr);
                    add(&mut sys, row, psi_index(grid, i + 1, j), -dz * ar / hr);
                    add(&mut sys, row, phi_index(grid, i, j), -dz * cr / 2.0);
                    add(&mut sys, row, phi_index(grid, i + 1, j), -dz * cr / 2.0);
                    sys.rhs[row] -= dz * half_source(gt1, i, j);
                } else {
                    sys.rhs[row] += dz * (coeffs.a[i] * boundary.dpsi_r1[j] - gt1[(i, j)]);
                }
                // x3 faces; the walls carry no flux
                let bz = coeffs.b[i];
                if j > 0 {
                    add(&mut sys, row, row, dr * bz / hz);
                    add(&mut sys, row, psi_index(grid, i, j - 1), -dr * bz / hz);
                    sys.rhs[row] += dr * up_source(gt3, i, j - 1);
                }
                if j + 1 < nz {
                    add(&mut sys, row, row, dr * bz / hz);
                    add(&mut sys, row, psi_index(grid, i, j + 1), -dr * bz / hz);
                    sys.rhs[row] -= dr * up_source(gt3, i, j);
                }
            }

            let row = phi_index(grid, i, j);
            if i == 0 || i + 1 == nr {
                sys.push(row, row, 1.0);
                continue;
            }
            let (rl, rr) = (0.5 * (grid.r(i - 1) + r), 0.5 * (r + grid.r(i + 1)));
            add(&mut sys, row, row, dz * (rl + rr) / hr);
            add(&mut sys, row, phi_index(grid, i - 1, j), -dz * rl / hr);
            add(&mut sys, row, phi_index(grid, i + 1, j), -dz * rr / hr);
            if j > 0 {
                add(&mut sys, row, row, dr * r / hz);
                add(&mut sys, row, phi_index(grid, i, j - 1), -dr * r / hz);
            }
            if j + 1 < nz {
                add(&mut sys, row, row, dr * r / hz);
                add(&mut sys, row, phi_index(grid, i, j + 1), -dr * r / hz);
            }
            add(&mut sys, row, row, dr * dz * coeffs.d[i]);
            // c psi_r, the negative transpose of the d_r(c phi) coupling
            let (cl, cr) = (coeffs.c_half[i - 1], coeffs.c_half[i]);
            add(&mut sys, row, psi_index(grid, i + 1, j), -dz * cr / 2.0);
            add(&mut sys, row, psi_index(grid, i, j), dz * (cr - cl) / 2.0);
            add(&mut sys, row, psi_index(grid, i - 1, j), dz * cl / 2.0);
            sys.rhs[row] -= dr * dz * gt4[(i, j)];
        }
    }
    sys
}

/// Factored coupled operator; the matrix depends only on the background.
#[derive(Debug, Clone)]
pub struct CoupledSolver {
    pub grid: Grid2D,
    pub coeffs: CoupledCoefficients,
    solver: PreparedSolver,
}

impl CoupledSolver {
    pub fn new(grid: Grid2D, coeffs: CoupledCoefficients, kind: LinearSolver) -> Result<Self> {
        let z = ScalarField2D::zeros(&grid);
        let sys = assemble_coupled(&coeffs, &z, &z, &z, &CoupledBoundary::zero(&grid), &grid);
        let solver = PreparedSolver::new(sys.to_csr(), &coupled_permutation(&grid), kind)?;
        Ok(Self { grid, coeffs, solver })
    }

    pub fn solve(
        &self,
        gt1: &ScalarField2D,
        gt3: &ScalarField2D,
        gt4: &ScalarField2D,
        boundary: &CoupledBoundary,
    ) -> Result<(ScalarField2D, ScalarField2D)> {
        let sys = assemble_coupled(&self.coeffs, gt1, gt3, gt4, boundary, &self.grid);
        split(&self.grid, &self.solver.solve(&sys.rhs)?)
    }

    pub fn is_direct(&self) -> bool {
        self.solver.is_direct()
    }

    /// The assembled operator, Dirichlet rows included.
    pub fn matrix(&self) -> &Csr {
        self.solver.matrix()
    }
}

fn split(grid: &Grid2D, x: &[f64]) -> Result<(ScalarField2D, ScalarField2D)> {
    let n = grid.len();
    let psi = ScalarField2D { nr: grid.nr, nz: grid.nz, data: x[..n].to_vec() };
    let phi = ScalarField2D { nr: grid.nr, nz: grid.nz, data: x[n..].to_vec() };
    if !(psi.is_finite() && phi.is_finite()) {
        return Err(Error::SingularSystem { row: 0 });
    }
    Ok((psi, phi))
}

/// One-shot solve of an assembled system on `grid`.
pub fn solve_coupled(system: &SparseSystem, grid: &Grid2D, kind: LinearSolver) -> Result<(ScalarField2D, ScalarField2D)> {
    let solver = PreparedSolver::new(system.to_csr(), &coupled_permutation(grid), kind)?;
    split(grid, &solver.solve(&system.rhs)?)
}

/// Factored 5-point Laplacian on the reflected section x3 in [-3, 3] with
/// d_r psi1 = 0 at r0 and psi1 = 0 at r1 and x3 = +-3.
#[derive(Debug, Clone)]
pub struct Psi1Solver {
    pub grid: Grid2D,
    ext: Grid2D,
    solver: PreparedSolver,
}

impl Psi1Solver {
    pub fn new(grid: Grid2D, kind: LinearSolver) -> Result<Self> {
        let ext = grid.extended();
        let (nr, nz) = (ext.nr, ext.nz);
        let (ir2, iz2) = (1.0 / (ext.hr() * ext.hr()), 1.0 / (ext.hz() * ext.hz()));
        let m = nr - 1;
        let unknown = |i: usize, j: usize| (j - 1) * m + i;
        let mut sys = SparseSystem::new(m * (nz - 2));
        for j in 1..nz - 1 {
            for i in 0..m {
                let row = unknown(i, j);
                sys.push(row, row, 2.0 * ir2 + 2.0 * iz2);
                if i == 0 {
                    sys.push(row, unknown(1, j), -2.0 * ir2);
                } else {
                    sys.push(row, unknown(i - 1, j), -ir2);
                    if i + 1 < m {
                        sys.push(row, unknown(i + 1, j), -ir2);
                    }
                }
                if j > 1 {
                    sys.push(row, unknown(i, j - 1), -iz2);
                }
                if j + 2 < nz {
                    sys.push(row, unknown(i, j + 1), -iz2);
                }
            }
        }
        let perm: Vec<usize> = (0..sys.n).collect();
        let solver = PreparedSolver::new(sys.to_csr(), &perm, kind)?;
        Ok(Self { grid, ext, solver })
    }

    /// Solves (d_r^2 + d_3^2) psi1 = G2 through the odd reflection of G2.
    pub fn solve(&self, g2: &ScalarField2D) -> Result<ScalarField2D> {
        let (ext, g2e) = extend_symmetric(&self.grid, g2, Parity::Odd)?;
        debug_assert_eq!(ext, self.ext);
        let m = ext.nr - 1;
        let mut rhs = vec![0.0; self.solver.matrix().n];
        for j in 1..ext.nz - 1 {
            for i in 0..m {
                rhs[(j - 1) * m + i] = -g2e[(i, j)];
            }
        }
        let x = self.solver.solve(&rhs)?;
        let mut full = ScalarField2D::zeros(&ext);
        for j in 1..ext.nz - 1 {
            for i in 0..m {
                full[(i, j)] = x[(j - 1) * m + i];
            }
        }
        let mut psi1 = restrict_extended(&self.grid, &full);
        if !psi1.is_finite() {
            return Err(Error::SingularSystem { row: 0 });
        }
        let top = self.grid.nz - 1;
        for i in 0..self.grid.nr {
            psi1[(i, 0)] = 0.0;
            psi1[(i, top)] = 0.0;
        }
        Ok(psi1)
    }
}

pub fn solve_psi1(g2: &ScalarField2D, grid: &Grid2D) -> Result<ScalarField2D> {
    Psi1Solver::new(*grid, LinearSolver::Auto)?.solve(g2)
}

/// Largest one-sided |d_r psi1| and |d_3^2 psi1| on the walls.
pub fn psi1_wall_check(grid: &Grid2D, psi1: &ScalarField2D) -> (f64, f64) {
    let dr = d_r(grid, psi1);
    let top = grid.nz - 1;
    let h2 = grid.hz() * grid.hz();
    let (mut a, mut b) = (0.0_f64, 0.0_f64);
    for i in 0..grid.nr {
        a = a.max(dr[(i, 0)].abs()).max(dr[(i, top)].abs());
        let lo = (2.0 * psi1[(i, 0)] - 5.0 * psi1[(i, 1)] + 4.0 * psi1[(i, 2)] - psi1[(i, 3)]) / h2;
        let hi = (2.0 * psi1[(i, top)] - 5.0 * psi1[(i, top - 1)] + 4.0 * psi1[(i, top - 2)] - psi1[(i, top - 3)]) / h2;
        b = b.max(lo.abs()).max(hi.abs());
    }
    (a, b)
}

/// Largest one-sided |d_3 psi| on the walls, where the condition is only
/// imposed weakly.
pub fn psi_wall_slope(grid: &Grid2D, psi: &ScalarField2D) -> f64 {
    let top = grid.nz - 1;
    let h = grid.hz();
    (0..grid.nr)
        .map(|i| {
            let lo = (-3.0 * psi[(i, 0)] + 4.0 * psi[(i, 1)] - psi[(i, 2)]) / (2.0 * h);
            let hi = (3.0 * psi[(i, top)] - 4.0 * psi[(i, top - 1)] + psi[(i, top - 2)]) / (2.0 * h);
            lo.abs().max(hi.abs())
        })
        .fold(0.0, f64::max)
}

/// W1 = d_r psi - d_3 psi1, W3 = d_3 psi + d_r psi1, W6 = phi + phi1.
pub fn recover_deviation(
    grid: &Grid2D,
    psi: &ScalarField2D,
    phi: &ScalarField2D,
    psi1: &ScalarField2D,
    boundary: &BoundaryPerturbation,
) -> (ScalarField2D, ScalarField2D, ScalarField2D) {
    let w1 = d_r(grid, psi).sub(&d_z_sym(grid, psi1, Parity::Odd));
    let w3 = d_z_sym(grid, psi, Parity::Even).add(&d_r(grid, psi1));
    let w6 = ScalarField2D::from_index_fn(grid, |i, j| {
        phi[(i, j)] + boundary.phi1(grid.r0, grid.r1, grid.r(i), grid.z(j))
    });
    (w1, w3, w6)
}

/// Pieces of the discrete bilinear form at one (psi, phi) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParts {
    pub psi_energy: f64,
    pub phi_energy: f64,
    /// psi-row coupling tested against psi, about +int c phi psi_r.
    pub mixed_first: f64,
    /// phi-row coupling tested against phi, about -int c psi_r phi.
    pub mixed_second: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.psi_energy + self.phi_energy + self.mixed_first + self.mixed_second
    }
}

/// Face-sum evaluation of the bilinear form of `assemble_coupled` for fields
/// vanishing where Dirichlet data is imposed.
pub fn bilinear_form(coeffs: &CoupledCoefficients, grid: &Grid2D, psi: &ScalarField2D, phi: &ScalarField2D) -> EnergyParts {
    let (nr, nz) = (grid.nr, grid.nz);
    let (hr, hz) = (grid.hr(), grid.hz());
    let mut e = EnergyParts { psi_energy: 0.0, phi_energy: 0.0, mixed_first: 0.0, mixed_second: 0.0 };
    for j in 0..nz {
        let dz = grid.wz(j);
        for i in 0..nr - 1 {
            let rf = 0.5 * (grid.r(i) + grid.r(i + 1));
            let dpsi = psi[(i + 1, j)] - psi[(i, j)];
            let dphi = phi[(i + 1, j)] - phi[(i, j)];
            e.psi_energy += dz * coeffs.a_half[i] * dpsi * dpsi / hr;
            e.phi_energy += dz * rf * dphi * dphi / hr;
        }
    }
    for i in 0..nr {
        let dr = grid.wr(i);
        for j in 0..nz - 1 {
            let dpsi = psi[(i, j + 1)] - psi[(i, j)];
            let dphi = phi[(i, j + 1)] - phi[(i, j)];
            e.psi_energy += dr * coeffs.b[i] * dpsi * dpsi / hz;
            e.phi_energy += dr * grid.r(i) * dphi * dphi / hz;
        }
        for j in 0..nz {
            e.phi_energy += dr * grid.wz(j) * coeffs.d[i] * phi[(i, j)] * phi[(i, j)];
        }
    }
    for j in 0..nz {
        let dz = grid.wz(j);
        for i in 1..nr {
            let cl = coeffs.c_half[i - 1];
            let mut row = dz * cl * (phi[(i - 1, j)] + phi[(i, j)]) / 2.0;
            if i + 1 < nr {
                let cr = coeffs.c_half[i];
                row -= dz * cr * (phi[(i, j)] + phi[(i + 1, j)]) / 2.0;
            }
            e.mixed_first += psi[(i, j)] * row;
        }
        for i in 1..nr - 1 {
            let (cl, cr) = (coeffs.c_half[i - 1], coeffs.c_half[i]);
            let row = -dz * (cr * (psi[(i + 1, j)] - psi[(i, j)]) + cl * (psi[(i, j)] - psi[(i - 1, j)])) / 2.0;
            e.mixed_second += phi[(i, j)] * row;
        }
    }
    e
}

/// Discrete H1 norm squared with trapezoid weights and face differences.
pub fn h1_norm_sq(grid: &Grid2D, f: &ScalarField2D) -> f64 {
    let (hr, hz) = (grid.hr(), grid.hz());
    let mut s = 0.0;
    for j in 0..grid.nz {
        for i in 0..grid.nr {
            s += grid.wr(i) * grid.wz(j) * f[(i, j)] * f[(i, j)];
            if i + 1 < grid.nr {
                let d = f[(i + 1, j)] - f[(i, j)];
                s += grid.wz(j) * d * d / hr;
            }
            if j + 1 < grid.nz {
                let d = f[(i, j + 1)] - f[(i, j)];
                s += grid.wr(i) * d * d / hz;
            }
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoercivityReport {
    pub min_quotient: f64,
    /// max |mixed_first + mixed_second| / (|mixed_first| + |mixed_second|)
    pub max_mixed_imbalance: f64,
    pub samples: usize,
}

/// Random smooth probe pair with psi = 0 at r0 and phi = 0 at r0, r1; the
/// Dirichlet condition at r0 rules out constant psi.
pub fn probe_pair(grid: &Grid2D, rng: &mut ChaCha8Rng) -> (ScalarField2D, ScalarField2D) {
    let modes = 4;
    let mut ca = [[0.0; 4]; 4];
    let mut cb = [[0.0; 4]; 4];
    for k in 0..modes {
        for l in 0..modes {
            let damp = 1.0 / (1.0 + (k + l) as f64);
            ca[k][l] = rng.gen_range(-1.0..1.0) * damp;
            cb[k][l] = rng.gen_range(-1.0..1.0) * damp;
        }
    }
    let scale = rng.gen_range(0.1..10.0);
    let len = grid.r1 - grid.r0;
    let psi = ScalarField2D::from_fn(grid, |r, z| {
        let s = (r - grid.r0) / len;
        let mut v = 0.0;
        for k in 0..modes {
            for l in 0..modes {
                v += ca[k][l] * sin((k as f64 + 0.5) * PI * s) * cos(l as f64 * PI * (z + 1.0) / 2.0);
            }
        }
        v
    });
    let phi = ScalarField2D::from_fn(grid, |r, z| {
        let s = (r - grid.r0) / len;
        let mut v = 0.0;
        for k in 0..modes {
            for l in 0..modes {
                v += cb[k][l] * sin((k + 1) as f64 * PI * s) * cos(l as f64 * PI * (z + 1.0) / 2.0);
            }
        }
        scale * v
    });
    (psi, phi)
}

pub fn coercivity_probe(coeffs: &CoupledCoefficients, grid: &Grid2D, n_samples: usize, seed: u64) -> CoercivityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CoercivityReport { min_quotient: f64::INFINITY, max_mixed_imbalance: 0.0, samples: n_samples };
    for _ in 0..n_samples {
        let (psi, phi) = probe_pair(grid, &mut rng);
        let e = bilinear_form(coeffs, grid, &psi, &phi);
        let q = e.total() / (h1_norm_sq(grid, &psi) + h1_norm_sq(grid, &phi));
        report.min_quotient = report.min_quotient.min(q);
        let scale = e.mixed_first.abs() + e.mixed_second.abs();
        if scale > 0.0 {
            report.max_mixed_imbalance = report.max_mixed_imbalance.max((e.mixed_first + e.mixed_second).abs() / scale);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::{integrate_background, InletData};
    use crate::boundary::BoundaryFn;
    use crate::grid::{d_zz, norms, Weight};
    use crate::sparse::Csr;

    fn subsonic() -> BackgroundProfile {
        let inlet = InletData { gamma: 2.0, rho0: 1.0, u10: 0.5, u20: 0.5, a0: 1.0, e0: 0.1, b0: 0.5, r0: 1.0, r1: 2.0 };
        integrate_background(&inlet, 2049).unwrap()
    }

    fn transonic() -> BackgroundProfile {
        let inlet = InletData { gamma: 2.0, rho0: 1.0, u10: 0.5, u20: 1.6, a0: 1.0, e0: 0.1, b0: 0.5, r0: 1.0, r1: 3.0 };
        integrate_background(&inlet, 2049).unwrap()
    }

    fn grid(n: usize) -> Grid2D {
        Grid2D::new(n, n, 1.0, 2.0).unwrap()
    }

    #[test]
    fn psi1_zero_data() {
        let g = grid(17);
        let psi1 = solve_psi1(&ScalarField2D::zeros(&g), &g).unwrap();
        assert_eq!(psi1.sup_norm(), 0.0);
    }

    #[test]
    fn psi1_rejects_incompatible_source() {
        let g = grid(17);
        let g2 = ScalarField2D::from_fn(&g, |_, z| z);
        assert!(matches!(solve_psi1(&g2, &g), Err(Error::OddExtensionMismatch { .. })));
    }

    fn psi1_exact(r: f64, z: f64) -> f64 {
        // d_r = 0 at r = 1, zero at r = 2 and on the walls
        sin(PI * z) * cos(PI * (r - 1.0) / 2.0)
    }

    fn psi1_error(n: usize) -> (f64, f64, f64) {
        let g = grid(n);
        let g2 = ScalarField2D::from_fn(&g, |r, z| -(PI * PI + PI * PI / 4.0) * psi1_exact(r, z));
        let psi1 = solve_psi1(&g2, &g).unwrap();
        let exact = ScalarField2D::from_fn(&g, psi1_exact);
        let (dr, dzz) = psi1_wall_check(&g, &psi1);
        (psi1.sub(&exact).sup_norm(), dr, dzz)
    }

    #[test]
    fn psi1_manufactured_is_second_order() {
        let (a, dr, dzz) = psi1_error(17);
        let (b, _, dzz_fine) = psi1_error(33);
        let p = (a / b).log2();
        assert!((p - 2.0).abs() < 0.2, "order {p}");
        assert_eq!(dr, 0.0);
        assert!(dzz / dzz_fine > 3.0, "{dzz} {dzz_fine}");
    }

    fn coeffs_fn(r: f64) -> [f64; 4] {
        [r * (1.2 - 0.1 * r), r * 1.3, 0.4 * r, r * 0.9]
    }

    #[test]
    fn blocks_are_symmetric_and_coupling_is_skew() {
        let g = grid(9);
        let co = CoupledCoefficients::from_profile(&subsonic(), &g).unwrap();
        let z = ScalarField2D::zeros(&g);
        let sys = assemble_coupled(&co, &z, &z, &z, &CoupledBoundary::zero(&g), &g);
        assert!(sys.rhs.iter().all(|v| *v == 0.0));
        let a = sys.to_csr();
        let n = g.len();
        for r in 0..2 * n {
            for k in a.row_ptr[r]..a.row_ptr[r + 1] {
                let c = a.cols[k];
                let v = a.vals[k];
                if r == c {
                    continue;
                }
                let same_block = (r < n) == (c < n);
                if same_block {
                    assert!((v - a.get(c, r)).abs() < 1e-14, "block asymmetry at {r},{c}");
                } else {
                    assert!((v + a.get(c, r)).abs() < 1e-14, "coupling not skew at {r},{c}");
                }
            }
        }
    }

    /// Matrix-free application of the discrete operator to (psi, phi) with the
    /// Dirichlet nodes held at the given values.
    fn stencil_apply(co: &CoupledCoefficients, g: &Grid2D, psi: &ScalarField2D, phi: &ScalarField2D) -> Vec<f64> {
        let (nr, nz) = (g.nr, g.nz);
        let (hr, hz) = (g.hr(), g.hz());
        let mut out = vec![0.0; 2 * g.len()];
        for j in 0..nz {
            for i in 0..nr {
                let p = g.idx(i, j);
                if i == 0 {
                    out[p] = psi[(0, j)];
                } else {
                    let flux = |k: usize| {
                        co.a_half[k] * (psi[(k + 1, j)] - psi[(k, j)]) / hr + co.c_half[k] * (phi[(k, j)] + phi[(k + 1, j)]) / 2.0
                    };
                    let mut v = g.wz(j) * flux(i - 1);
                    if i + 1 < nr {
                        v -= g.wz(j) * flux(i);
                    }
                    if j > 0 {
                        v += g.wr(i) * co.b[i] * (psi[(i, j)] - psi[(i, j - 1)]) / hz;
                    }
                    if j + 1 < nz {
                        v -= g.wr(i) * co.b[i] * (psi[(i, j + 1)] - psi[(i, j)]) / hz;
                    }
                    out[p] = v;
                }
                let q = g.len() + p;
                if i == 0 || i + 1 == nr {
                    out[q] = phi[(i, j)];
                    continue;
                }
                let rl = 0.5 * (g.r(i - 1) + g.r(i));
                let rr = 0.5 * (g.r(i) + g.r(i + 1));
                let mut v = g.wz(j) * (rl * (phi[(i, j)] - phi[(i - 1, j)]) - rr * (phi[(i + 1, j)] - phi[(i, j)])) / hr;
                if j > 0 {
                    v += g.wr(i) * g.r(i) * (phi[(i, j)] - phi[(i, j - 1)]) / hz;
                }
                if j + 1 < nz {
                    v -= g.wr(i) * g.r(i) * (phi[(i, j + 1)] - phi[(i, j)]) / hz;
                }
                v += g.wr(i) * g.wz(j) * co.d[i] * phi[(i, j)];
                let dpsi_r = (co.c_half[i] * (psi[(i + 1, j)] - psi[(i, j)]) + co.c_half[i - 1] * (psi[(i, j)] - psi[(i - 1, j)])) / 2.0;
                v -= g.wz(j) * dpsi_r;
                out[q] = v;
            }
        }
        out
    }

    #[test]
    fn matvec_matches_stencil_oracle() {
        let g = grid(9);
        let co = CoupledCoefficients::from_profile(&subsonic(), &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let psi = ScalarField2D::from_index_fn(&g, |i, _| if i == 0 { 0.0 } else { rng.gen_range(-1.0..1.0) });
            let phi = ScalarField2D::from_index_fn(&g, |i, _| if i == 0 || i == 8 { 0.0 } else { rng.gen_range(-1.0..1.0) });
            let z = ScalarField2D::zeros(&g);
            let a: Csr = assemble_coupled(&co, &z, &z, &z, &CoupledBoundary::zero(&g), &g).to_csr();
            let x: Vec<f64> = psi.data.iter().chain(&phi.data).copied().collect();
            let ax = a.matvec(&x);
            let oracle = stencil_apply(&co, &g, &psi, &phi);
            for (u, v) in ax.iter().zip(&oracle) {
                assert!((u - v).abs() < 1e-12, "{u} {v}");
            }
            let e = bilinear_form(&co, &g, &psi, &phi);
            let xax: f64 = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
            assert!((e.total() - xax).abs() < 1e-11 * xax.abs().max(1.0));
        }
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let g = grid(9);
        let co = CoupledCoefficients::from_profile(&subsonic(), &g).unwrap();
        let z = ScalarField2D::zeros(&g);
        let sys = assemble_coupled(&co, &z, &z, &z, &CoupledBoundary::zero(&g), &g);
        let (psi, phi) = solve_coupled(&sys, &g, LinearSolver::Direct).unwrap();
        assert_eq!(psi.sup_norm() + phi.sup_norm(), 0.0);
    }

    #[test]
    fn rank_deficient_system_is_singular() {
        let g = grid(9);
        let co = CoupledCoefficients::from_profile(&subsonic(), &g).unwrap();
        let z = ScalarField2D::zeros(&g);
        let mut sys = assemble_coupled(&co, &z, &z, &z, &CoupledBoundary::zero(&g), &g);
        let victim = g.idx(4, 4);
        for k in 0..sys.nnz() {
            if sys.rows[k] == victim {
                sys.vals[k] = 0.0;
            }
        }
        assert!(matches!(solve_coupled(&sys, &g, LinearSolver::Direct), Err(Error::SingularSystem { .. })));
    }

    fn exact_psi(r: f64, z: f64) -> [f64; 3] {
        // value, d_r, d_3
        let (s, c) = (sin(PI * z), cos(PI * z));
        [r * r * c + 0.3 * r, 2.0 * r * c + 0.3, -PI * r * r * s]
    }

    fn exact_phi(r: f64, z: f64) -> [f64; 3] {
        // value, d_r, r * Laplacian
        let s = sin(PI * (r - 1.0));
        let cr = cos(PI * (r - 1.0));
        let cz = 1.0 + 0.5 * cos(PI * z);
        let v = s * cz;
        let dr = PI * cr * cz;
        let drr = -PI * PI * s * cz;
        let dzz = -0.5 * PI * PI * s * cos(PI * z);
        [v, dr, r * drr + dr + r * dzz]
    }

    fn coupled_error(n: usize) -> (f64, f64) {
        let g = grid(n);
        let co = CoupledCoefficients::from_fn(&g, coeffs_fn).unwrap();
        let gt1 = ScalarField2D::from_fn(&g, |r, z| {
            let k = coeffs_fn(r);
            k[0] * exact_psi(r, z)[1] + k[2] * exact_phi(r, z)[0]
        });
        let gt3 = ScalarField2D::from_fn(&g, |r, z| coeffs_fn(r)[1] * exact_psi(r, z)[2]);
        let gt4 = ScalarField2D::from_fn(&g, |r, z| {
            let k = coeffs_fn(r);
            exact_phi(r, z)[2] + k[2] * exact_psi(r, z)[1] - k[3] * exact_phi(r, z)[0]
        });
        let bc = CoupledBoundary {
            psi_r0: (0..g.nz).map(|j| exact_psi(g.r0, g.z(j))[0]).collect(),
            dpsi_r1: (0..g.nz).map(|j| exact_psi(g.r1, g.z(j))[1]).collect(),
        };
        let solver = CoupledSolver::new(g, co, LinearSolver::Direct).unwrap();
        let (psi, phi) = solver.solve(&gt1, &gt3, &gt4, &bc).unwrap();
        let ep = ScalarField2D::from_fn(&g, |r, z| exact_psi(r, z)[0]);
        let ef = ScalarField2D::from_fn(&g, |r, z| exact_phi(r, z)[0]);
        (psi.sub(&ep).sup_norm(), phi.sub(&ef).sup_norm())
    }

    #[test]
    fn coupled_manufactured_is_second_order() {
        let (a, b) = (coupled_error(17), coupled_error(33));
        let (p1, p2) = ((a.0 / b.0).log2(), (a.1 / b.1).log2());
        assert!((p1 - 2.0).abs() < 0.2 && (p2 - 2.0).abs() < 0.2, "{p1} {p2} {a:?} {b:?}");
    }

    #[test]
    fn bicgstab_fallback_matches_direct() {
        let g = grid(17);
        let co = CoupledCoefficients::from_profile(&subsonic(), &g).unwrap();
        let gt4 = ScalarField2D::from_fn(&g, |r, z| (r - 1.0) * (2.0 - r) * cos(PI * z));
        let z = ScalarField2D::zeros(&g);
        let bc = CoupledBoundary::zero(&g);
        let direct = CoupledSolver::new(g, co.clone(), LinearSolver::Direct).unwrap().solve(&z, &z, &gt4, &bc).unwrap();
        let iter = CoupledSolver::new(g, co, LinearSolver::BiCgStab).unwrap().solve(&z, &z, &gt4, &bc).unwrap();
        assert!(direct.0.sub(&iter.0).sup_norm() < 1e-8 && direct.1.sub(&iter.1).sup_norm() < 1e-8);
    }

    #[test]
    fn boundary_data_from_perturbation() {
        let g = grid(17);
        let b = BoundaryPerturbation {
            eps: 0.1,
            u3_en: BoundaryFn::SinPi(vec![0.0, 1.0]),
            u1_ex: BoundaryFn::CosPi(vec![1.0, 0.5]),
            ..Default::default()
        };
        let bc = CoupledBoundary::from_perturbation(&g, &b);
        for j in 0..g.nz {
            let z = g.z(j);
            // int_{-1}^{z} sin(pi t) dt = -(cos(pi z) + 1)/pi, shifted to vanish at 0
            let exact = 0.1 * (-(cos(PI * z) + 1.0) / PI + 2.0 / PI);
            assert!((bc.psi_r0[j] - exact).abs() < 5e-5, "{} {}", bc.psi_r0[j], exact);
            assert!((bc.dpsi_r1[j] - 0.1 * (1.0 + 0.5 * cos(PI * z))).abs() < 1e-15);
        }
    }

    #[test]
    fn recovery_examples() {
        let g = grid(17);
        let z = ScalarField2D::zeros(&g);
        let (w1, w3, w6) = recover_deviation(&g, &z, &z, &z, &BoundaryPerturbation::zero());
        assert_eq!(w1.sup_norm() + w3.sup_norm() + w6.sup_norm(), 0.0);
        let psi = ScalarField2D::from_fn(&g, |r, _| r * r / 2.0);
        let (w1, _, _) = recover_deviation(&g, &psi, &z, &z, &BoundaryPerturbation::zero());
        assert!(w1.sub(&ScalarField2D::from_fn(&g, |r, _| r)).sup_norm() < 1e-13);
    }

    #[test]
    fn recovered_curl_matches_g2() {
        let err = |n: usize| {
            let g = grid(n);
            let g2 = ScalarField2D::from_fn(&g, |r, z| sin(PI * z) * (r - 1.0) * (2.5 - r));
            let psi1 = solve_psi1(&g2, &g).unwrap();
            let psi = ScalarField2D::from_fn(&g, |r, z| r * cos(PI * z) + r * r);
            let z = ScalarField2D::zeros(&g);
            let (w1, w3, _) = recover_deviation(&g, &psi, &z, &psi1, &BoundaryPerturbation::zero());
            let curl = d_r(&g, &w3).sub(&crate::grid::d_z(&g, &w1));
            crate::grid::interior_sup(&g, &curl.sub(&g2), 2)
        };
        let (a, b) = (err(17), err(33));
        assert!(a / b > 3.0, "{a} {b}");
    }

    #[test]
    fn coercivity_on_both_regimes() {
        for profile in [subsonic(), transonic()] {
            let g = Grid2D::new(33, 33, profile.r_nodes[0], profile.inlet.r1).unwrap();
            let co = CoupledCoefficients::from_profile(&profile, &g).unwrap();
            assert!(co.a.iter().all(|a| *a > 0.0));
            let rep = coercivity_probe(&co, &g, 20, 11);
            assert!(rep.min_quotient > 0.0, "{rep:?}");
            assert!(rep.max_mixed_imbalance <= 1e-12, "{rep:?}");
        }
    }

    #[test]
    fn pure_phi_probe_has_positive_energy() {
        let g = grid(17);
        let co = CoupledCoefficients::from_profile(&subsonic(), &g).unwrap();
        let phi = ScalarField2D::from_fn(&g, |r, z| sin(PI * (r - 1.0)) * (1.0 + z * z));
        let e = bilinear_form(&co, &g, &ScalarField2D::zeros(&g), &phi);
        assert!(e.total() > 0.0 && e.mixed_first == 0.0 && e.mixed_second == 0.0);
    }

    #[test]
    fn quotient_is_stable_across_levels() {
        let p = subsonic();
        let q = |n: usize| {
            let g = grid(n);
            coercivity_probe(&CoupledCoefficients::from_profile(&p, &g).unwrap(), &g, 30, 5).min_quotient
        };
        let (a, b) = (q(33), q(65));
        assert!((a / b - 1.0).abs() < 0.2, "{a} {b}");
    }

    #[test]
    fn second_difference_helper_sanity() {
        let g = grid(9);
        let f = ScalarField2D::from_fn(&g, |_, z| z * z);
        assert!(d_zz(&g, &f).map(|v| v - 2.0).sup_norm() < 1e-9);
        assert!(norms(&g, &f, Weight::Plain).sup <= 1.0);
    }
}
