//! Triplet and CSR matrices, a banded LU for the structured elliptic
//! systems and a Jacobi-preconditioned BiCGStab fallback.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::math::sqrt;
use crate::{Error, Result};

/// Relative pivot threshold of the banded LU.
pub const PIVOT_TOL: f64 = 1e-13;
/// Required ||Ax - b|| / ||b|| in the max norm.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Band storage above which `LinearSolver::Auto` switches to BiCGStab.
pub const BAND_MEMORY_BUDGET: usize = 512 << 20;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseSystem {
    pub n: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl SparseSystem {
    pub fn new(n: usize) -> Self {
        Self { n, rhs: vec![0.0; n], ..Default::default() }
    }

    pub fn push(&mut self, row: usize, col: usize, v: f64) {
        self.rows.push(row);
        self.cols.push(col);
        self.vals.push(v);
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Duplicates are summed, explicit zeros dropped.
    pub fn to_csr(&self) -> Csr {
        let mut count = vec![0usize; self.n + 1];
        for &r in &self.rows {
            count[r + 1] += 1;
        }
        for i in 0..self.n {
            count[i + 1] += count[i];
        }
        let mut next = count.clone();
        let mut cols = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for k in 0..self.nnz() {
            let r = self.rows[k];
            cols[next[r]] = self.cols[k];
            vals[next[r]] = self.vals[k];
            next[r] += 1;
        }
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut out_cols = Vec::with_capacity(self.nnz());
        let mut out_vals = Vec::with_capacity(self.nnz());
        let mut pairs: Vec<(usize, f64)> = Vec::new();
        for r in 0..self.n {
            pairs.clear();
            pairs.extend((count[r]..count[r + 1]).map(|k| (cols[k], vals[k])));
            pairs.sort_by_key(|p| p.0);
            let mut k = 0;
            while k < pairs.len() {
                let c = pairs[k].0;
                let mut v = 0.0;
                while k < pairs.len() && pairs[k].0 == c {
                    v += pairs[k].1;
                    k += 1;
                }
                if v != 0.0 {
                    out_cols.push(c);
                    out_vals.push(v);
                }
            }
            row_ptr[r + 1] = out_cols.len();
        }
        Csr { n: self.n, row_ptr, cols: out_cols, vals: out_vals }
    }

    /// `i j value` lines, 0-based, duplicates summed.
    pub fn to_coo_string(&self) -> String {
        let csr = self.to_csr();
        let mut s = String::new();
        for r in 0..csr.n {
            for k in csr.row_ptr[r]..csr.row_ptr[r + 1] {
                let _ = writeln!(s, "{} {} {:.16e}", r, csr.cols[k], csr.vals[k]);
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| (self.row_ptr[r]..self.row_ptr[r + 1]).map(|k| self.vals[k] * x[self.cols[k]]).sum())
            .collect()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[range.clone()].binary_search(&c) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    /// Half bandwidth after renumbering unknown k to `perm[k]`.
    pub fn bandwidth(&self, perm: &[usize]) -> usize {
        let mut bw = 0;
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                bw = bw.max(perm[r].abs_diff(perm[self.cols[k]]));
            }
        }
        bw
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// LU without pivoting in band storage. Rows are permuted by `perm` first;
/// the systems assembled here have a definite symmetric part, so no pivoting
/// is needed.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    bw: usize,
    width: usize,
    band: Vec<f64>,
    perm: Vec<usize>,
}

impl BandedLu {
    pub fn band_bytes(n: usize, bw: usize) -> usize {
        n * (2 * bw + 1) * core::mem::size_of::<f64>()
    }

    pub fn factor(a: &Csr, perm: &[usize]) -> Result<Self> {
        let n = a.n;
        let bw = a.bandwidth(perm);
        let width = 2 * bw + 1;
        let mut band = vec![0.0; n * width];
        let mut scale = vec![0.0_f64; n];
        for r in 0..n {
            let pr = perm[r];
            for k in a.row_ptr[r]..a.row_ptr[r + 1] {
                let pc = perm[a.cols[k]];
                band[pr * width + pc + bw - pr] += a.vals[k];
                scale[pr] = scale[pr].max(a.vals[k].abs());
            }
        }
        for k in 0..n {
            let pivot = band[k * width + bw];
            if !(pivot.abs() > PIVOT_TOL * scale[k]) || scale[k] == 0.0 {
                let row = perm.iter().position(|&p| p == k).unwrap_or(k);
                return Err(Error::SingularSystem { row });
            }
            let last = (k + bw).min(n - 1);
            let (head, tail) = band.split_at_mut((k + 1) * width);
            let pivot_row = &head[k * width + bw + 1..k * width + bw + 1 + (last - k)];
            for i in k + 1..=last {
                let row = &mut tail[(i - k - 1) * width..(i - k) * width];
                let lik = row[k + bw - i];
                if lik == 0.0 {
                    continue;
                }
                let l = lik / pivot;
                row[k + bw - i] = l;
                // columns k+1..=last of row i start at offset k+1+bw-i
                let start = k + 1 + bw - i;
                for (dst, src) in row[start..start + (last - k)].iter_mut().zip(pivot_row) {
                    *dst -= l * src;
                }
            }
        }
        Ok(Self { n, bw, width, band, perm: perm.to_vec() })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw, w) = (self.n, self.bw, self.width);
        let mut y = vec![0.0; n];
        for (old, &new) in self.perm.iter().enumerate() {
            y[new] = b[old];
        }
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = &self.band[i * w..(i + 1) * w];
            let mut s = y[i];
            for j in lo..i {
                s -= row[j + bw - i] * y[j];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let row = &self.band[i * w..(i + 1) * w];
            let mut s = y[i];
            for j in i + 1..=hi {
                s -= row[j + bw - i] * y[j];
            }
            y[i] = s / row[bw];
        }
        self.perm.iter().map(|&new| y[new]).collect()
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }
}

/// Jacobi-preconditioned BiCGStab.
pub fn bicgstab(a: &Csr, b: &[f64], x0: Option<&[f64]>, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.n;
    let dinv: Vec<f64> = a.diagonal().iter().map(|d| if *d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let bnorm = sup(b);
    let mut x = x0.map(|x| x.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let dot = |u: &[f64], v: &[f64]| -> f64 { u.iter().zip(v).map(|(a, b)| a * b).sum() };
    let ax = a.matvec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for _ in 0..max_iter {
        if sup(&r) <= tol * bnorm {
            return Ok(x);
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
        }
        let y: Vec<f64> = p.iter().zip(&dinv).map(|(p, d)| p * d).collect();
        v = a.matvec(&y);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 {
            break;
        }
        alpha = rho / denom;
        let s: Vec<f64> = r.iter().zip(&v).map(|(r, v)| r - alpha * v).collect();
        if sup(&s) <= tol * bnorm {
            for k in 0..n {
                x[k] += alpha * y[k];
            }
            return Ok(x);
        }
        let z: Vec<f64> = s.iter().zip(&dinv).map(|(s, d)| s * d).collect();
        let t = a.matvec(&z);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for k in 0..n {
            x[k] += alpha * y[k] + omega * z[k];
            r[k] = s[k] - omega * t[k];
        }
    }
    let res = sup(&r) / bnorm;
    if res <= tol {
        Ok(x)
    } else {
        Err(Error::IterativeNoConvergence { iterations: max_iter, residual: res })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearSolver {
    /// Banded LU unless the band exceeds the memory budget.
    #[default]
    Auto,
    Direct,
    BiCgStab,
}

#[derive(Debug, Clone)]
enum Backend {
    Lu(BandedLu),
    Iterative,
}

/// A matrix prepared for repeated solves with changing right-hand sides.
#[derive(Debug, Clone)]
pub struct PreparedSolver {
    matrix: Csr,
    backend: Backend,
}

impl PreparedSolver {
    pub fn new(matrix: Csr, perm: &[usize], kind: LinearSolver) -> Result<Self> {
        let use_lu = match kind {
            LinearSolver::Direct => true,
            LinearSolver::BiCgStab => false,
            LinearSolver::Auto => BandedLu::band_bytes(matrix.n, matrix.bandwidth(perm)) <= BAND_MEMORY_BUDGET,
        };
        let backend = if use_lu { Backend::Lu(BandedLu::factor(&matrix, perm)?) } else { Backend::Iterative };
        Ok(Self { matrix, backend })
    }

    pub fn matrix(&self) -> &Csr {
        &self.matrix
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.backend, Backend::Lu(_))
    }

    /// Solves and certifies ||Ax - b||_inf <= 1e-10 ||b||_inf, refining the
    /// direct solution up to three times.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let bnorm = sup(b);
        if bnorm == 0.0 {
            return Ok(vec![0.0; b.len()]);
        }
        match &self.backend {
            Backend::Lu(lu) => {
                let mut x = lu.solve(b);
                for _ in 0..4 {
                    let ax = self.matrix.matvec(&x);
                    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
                    let res = sup(&r);
                    if res <= RESIDUAL_TOL * bnorm {
                        return Ok(x);
                    }
                    let dx = lu.solve(&r);
                    for (x, d) in x.iter_mut().zip(&dx) {
                        *x += d;
                    }
                }
                let ax = self.matrix.matvec(&x);
                let res = b.iter().zip(&ax).fold(0.0_f64, |m, (b, a)| m.max((b - a).abs()));
                if res <= RESIDUAL_TOL * bnorm {
                    Ok(x)
                } else {
                    Err(Error::IterativeNoConvergence { iterations: 4, residual: res / bnorm })
                }
            }
            Backend::Iterative => bicgstab(&self.matrix, b, None, 0.1 * RESIDUAL_TOL, 20 * self.matrix.n.max(100)),
        }
    }
}

/// Euclidean norm.
pub fn norm2(v: &[f64]) -> f64 {
    sqrt(v.iter().map(|x| x * x).sum())
}
