//! Uniform (r, x3) grid over the annulus section with difference operators,
//! trapezoid norms and wall reflections.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::math::sqrt;
use crate::{Error, Result};

pub const MIN_GRID_NODES: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub nr: usize,
    pub nz: usize,
    pub r0: f64,
    pub r1: f64,
    pub z0: f64,
    pub z1: f64,
}

impl Grid2D {
    /// Grid over [r0, r1] x [-1, 1].
    pub fn new(nr: usize, nz: usize, r0: f64, r1: f64) -> Result<Self> {
        if nr < MIN_GRID_NODES || nz < MIN_GRID_NODES {
            return Err(Error::NotEnoughNodes { needed: MIN_GRID_NODES, got: nr.min(nz) });
        }
        if !(r0 > 0.0 && r1 > r0 && r1.is_finite()) {
            return Err(Error::InvalidInput(alloc::format!("bad radial extent [{r0}, {r1}]")));
        }
        Ok(Self { nr, nz, r0, r1, z0: -1.0, z1: 1.0 })
    }

    /// Same radial nodes with x3 reflected across both walls onto [-3, 3].
    pub fn extended(&self) -> Self {
        Self { nz: 3 * (self.nz - 1) + 1, z0: 3.0 * self.z0, z1: 3.0 * self.z1, ..*self }
    }

    pub fn hr(&self) -> f64 {
        (self.r1 - self.r0) / (self.nr - 1) as f64
    }

    pub fn hz(&self) -> f64 {
        (self.z1 - self.z0) / (self.nz - 1) as f64
    }

    pub fn r(&self, i: usize) -> f64 {
        if i + 1 == self.nr {
            self.r1
        } else {
            self.r0 + i as f64 * self.hr()
        }
    }

    pub fn z(&self, j: usize) -> f64 {
        if j + 1 == self.nz {
            self.z1
        } else {
            self.z0 + j as f64 * self.hz()
        }
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.nr).map(|i| self.r(i)).collect()
    }

    /// Radial midpoints r_{i+1/2}.
    pub fn half_radii(&self) -> Vec<f64> {
        (0..self.nr - 1).map(|i| 0.5 * (self.r(i) + self.r(i + 1))).collect()
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nr + i
    }

    pub fn len(&self) -> usize {
        self.nr * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trapezoid weight of radial node i.
    pub fn wr(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.nr {
            0.5 * self.hr()
        } else {
            self.hr()
        }
    }

    /// Trapezoid weight of axial node j.
    pub fn wz(&self, j: usize) -> f64 {
        if j == 0 || j + 1 == self.nz {
            0.5 * self.hz()
        } else {
            self.hz()
        }
    }

    pub fn same_shape(&self, f: &ScalarField2D) -> bool {
        f.nr == self.nr && f.nz == self.nz
    }
}

/// Reflection type across the walls x3 = +-1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField2D {
    pub nr: usize,
    pub nz: usize,
    pub data: Vec<f64>,
}

impl ScalarField2D {
    pub fn zeros(grid: &Grid2D) -> Self {
        Self { nr: grid.nr, nz: grid.nz, data: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: &Grid2D, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..grid.nz {
            let z = grid.z(j);
            for i in 0..grid.nr {
                out.data[grid.idx(i, j)] = f(grid.r(i), z);
            }
        }
        out
    }

    /// Field from a function of the node indices.
    pub fn from_index_fn(grid: &Grid2D, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..grid.nz {
            for i in 0..grid.nr {
                out.data[grid.idx(i, j)] = f(i, j);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { nr: self.nr, nz: self.nz, data: self.data.iter().map(|v| f(*v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.data.len(), other.data.len());
        Self {
            nr: self.nr,
            nz: self.nz,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    /// Bilinear interpolation; the point is clamped into the grid.
    pub fn interpolate(&self, grid: &Grid2D, r: f64, z: f64) -> f64 {
        let (hr, hz) = (grid.hr(), grid.hz());
        let sr = ((r - grid.r0) / hr).clamp(0.0, (grid.nr - 1) as f64);
        let sz = ((z - grid.z0) / hz).clamp(0.0, (grid.nz - 1) as f64);
        let i = (sr as usize).min(grid.nr - 2);
        let j = (sz as usize).min(grid.nz - 2);
        let (tr, tz) = (sr - i as f64, sz - j as f64);
        let f00 = self.data[grid.idx(i, j)];
        let f10 = self.data[grid.idx(i + 1, j)];
        let f01 = self.data[grid.idx(i, j + 1)];
        let f11 = self.data[grid.idx(i + 1, j + 1)];
        (1.0 - tz) * ((1.0 - tr) * f00 + tr * f10) + tz * ((1.0 - tr) * f01 + tr * f11)
    }
}

impl Index<(usize, usize)> for ScalarField2D {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[j * self.nr + i]
    }
}

impl IndexMut<(usize, usize)> for ScalarField2D {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[j * self.nr + i]
    }
}

/// First derivative along a line of n samples with spacing h, one-sided
/// second-order at the ends.
fn diff_line(n: usize, h: f64, get: impl Fn(usize) -> f64, mut put: impl FnMut(usize, f64)) {
    put(0, (-3.0 * get(0) + 4.0 * get(1) - get(2)) / (2.0 * h));
    for k in 1..n - 1 {
        put(k, (get(k + 1) - get(k - 1)) / (2.0 * h));
    }
    put(n - 1, (3.0 * get(n - 1) - 4.0 * get(n - 2) + get(n - 3)) / (2.0 * h));
}

fn diff2_line(n: usize, h: f64, get: impl Fn(usize) -> f64, mut put: impl FnMut(usize, f64)) {
    let h2 = h * h;
    put(0, (2.0 * get(0) - 5.0 * get(1) + 4.0 * get(2) - get(3)) / h2);
    for k in 1..n - 1 {
        put(k, (get(k + 1) - 2.0 * get(k) + get(k - 1)) / h2);
    }
    put(n - 1, (2.0 * get(n - 1) - 5.0 * get(n - 2) + 4.0 * get(n - 3) - get(n - 4)) / h2);
}

pub fn d_r(grid: &Grid2D, f: &ScalarField2D) -> ScalarField2D {
    let mut out = ScalarField2D::zeros(grid);
    let h = grid.hr();
    for j in 0..grid.nz {
        let base = j * grid.nr;
        let src = &f.data[base..base + grid.nr];
        let dst = &mut out.data[base..base + grid.nr];
        diff_line(grid.nr, h, |k| src[k], |k, v| dst[k] = v);
    }
    out
}

pub fn d_z(grid: &Grid2D, f: &ScalarField2D) -> ScalarField2D {
    let mut out = ScalarField2D::zeros(grid);
    let h = grid.hz();
    for i in 0..grid.nr {
        diff_line(grid.nz, h, |k| f.data[grid.idx(i, k)], |k, v| out.data[grid.idx(i, k)] = v);
    }
    out
}

pub fn d_rr(grid: &Grid2D, f: &ScalarField2D) -> ScalarField2D {
    let mut out = ScalarField2D::zeros(grid);
    let h = grid.hr();
    for j in 0..grid.nz {
        let base = j * grid.nr;
        let src = &f.data[base..base + grid.nr];
        let dst = &mut out.data[base..base + grid.nr];
        diff2_line(grid.nr, h, |k| src[k], |k, v| dst[k] = v);
    }
    out
}

pub fn d_zz(grid: &Grid2D, f: &ScalarField2D) -> ScalarField2D {
    let mut out = ScalarField2D::zeros(grid);
    let h = grid.hz();
    for i in 0..grid.nr {
        diff2_line(grid.nz, h, |k| f.data[grid.idx(i, k)], |k, v| out.data[grid.idx(i, k)] = v);
    }
    out
}

/// d/dx3 with wall values from the mirror ghost of the given parity: even
/// fields get exactly zero on the walls.
pub fn d_z_sym(grid: &Grid2D, f: &ScalarField2D, parity: Parity) -> ScalarField2D {
    let mut out = d_z(grid, f);
    let h = grid.hz();
    let top = grid.nz - 1;
    for i in 0..grid.nr {
        let (lo, hi) = match parity {
            Parity::Even => (0.0, 0.0),
            Parity::Odd => (f[(i, 1)] / h, -f[(i, top - 1)] / h),
        };
        out[(i, 0)] = lo;
        out[(i, top)] = hi;
    }
    out
}

/// Second x3 derivative with mirror ghosts at the walls.
pub fn d_zz_sym(grid: &Grid2D, f: &ScalarField2D, parity: Parity) -> ScalarField2D {
    let mut out = d_zz(grid, f);
    let h2 = grid.hz() * grid.hz();
    let s = parity.sign();
    let top = grid.nz - 1;
    for i in 0..grid.nr {
        out[(i, 0)] = (f[(i, 1)] * (1.0 + s) - 2.0 * f[(i, 0)]) / h2;
        out[(i, top)] = (f[(i, top - 1)] * (1.0 + s) - 2.0 * f[(i, top)]) / h2;
    }
    out
}

/// Reflects f across both walls onto x3 in [-3, 3]: f(r, 2 - x3) above the
/// top wall, f(r, -2 - x3) below the bottom one, negated for odd parity.
pub fn extend_symmetric(grid: &Grid2D, f: &ScalarField2D, parity: Parity) -> Result<(Grid2D, ScalarField2D)> {
    if parity == Parity::Odd {
        let tol = 1e-10 * f.sup_norm().max(1.0);
        for i in 0..grid.nr {
            for j in [0, grid.nz - 1] {
                let v = f[(i, j)];
                if !(v.abs() <= tol) {
                    return Err(Error::OddExtensionMismatch { value: v });
                }
            }
        }
    }
    let ext = grid.extended();
    let m = grid.nz - 1;
    let s = parity.sign();
    let mut out = ScalarField2D::zeros(&ext);
    for je in 0..ext.nz {
        let (j, sign) = if je < m {
            (m - je, s)
        } else if je <= 2 * m {
            (je - m, 1.0)
        } else {
            (3 * m - je, s)
        };
        for i in 0..grid.nr {
            out[(i, je)] = sign * f[(i, j)];
        }
    }
    Ok((ext, out))
}

/// Restriction of an extended field back onto the original section.
pub fn restrict_extended(grid: &Grid2D, f: &ScalarField2D) -> ScalarField2D {
    let m = grid.nz - 1;
    ScalarField2D::from_index_fn(grid, |i, j| f[(i, j + m)])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    Plain,
    /// Quadrature against r dr dx3.
    Radial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub sup: f64,
    pub l2: f64,
    /// sup |f| + sup |d_r f| + sup |d_z f|
    pub c1: f64,
}

pub fn norms(grid: &Grid2D, f: &ScalarField2D, weight: Weight) -> Norms {
    let mut sum = 0.0;
    for j in 0..grid.nz {
        for i in 0..grid.nr {
            let w = grid.wr(i) * grid.wz(j) * if weight == Weight::Radial { grid.r(i) } else { 1.0 };
            let v = f[(i, j)];
            sum += w * v * v;
        }
    }
    let sup = f.sup_norm();
    Norms { sup, l2: sqrt(sum), c1: sup + d_r(grid, f).sup_norm() + d_z(grid, f).sup_norm() }
}

/// Sup norm over nodes at least `margin` layers away from every boundary.
pub fn interior_sup(grid: &Grid2D, f: &ScalarField2D, margin: usize) -> f64 {
    let mut m = 0.0_f64;
    for j in margin..grid.nz - margin {
        for i in margin..grid.nr - margin {
            m = m.max(f[(i, j)].abs());
        }
    }
    m
}

/// Trapezoid L2 norm over the same interior nodes.
pub fn interior_l2(grid: &Grid2D, f: &ScalarField2D, margin: usize) -> f64 {
    let mut s = 0.0;
    for j in margin..grid.nz - margin {
        for i in margin..grid.nr - margin {
            s += grid.hr() * grid.hz() * f[(i, j)] * f[(i, j)];
        }
    }
    sqrt(s)
}
