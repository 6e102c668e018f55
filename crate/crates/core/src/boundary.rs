//! Boundary perturbation data of the axisymmetric problem.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::math::{cos, sin};
use crate::{Error, Result};

/// Analytic function of one variable.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum BoundaryFn {
    #[default]
    Zero,
    /// sum_k c[k] cos(k pi x)
    CosPi(Vec<f64>),
    /// sum_k c[k] sin(k pi x)
    SinPi(Vec<f64>),
    /// Polynomial, coefficients of the highest power first.
    Poly(Vec<f64>),
    /// Samples on a uniform grid over [-1, 1], cubic Hermite in between.
    Table(Vec<f64>),
}

impl BoundaryFn {
    pub fn value(&self, x: f64) -> f64 {
        self.eval(x)[0]
    }

    pub fn d1(&self, x: f64) -> f64 {
        self.eval(x)[1]
    }

    pub fn d2(&self, x: f64) -> f64 {
        self.eval(x)[2]
    }

    /// Value, first and second derivative.
    pub fn eval(&self, x: f64) -> [f64; 3] {
        match self {
            BoundaryFn::Zero => [0.0; 3],
            BoundaryFn::CosPi(c) => {
                let mut out = [0.0; 3];
                for (k, ck) in c.iter().enumerate() {
                    let w = k as f64 * PI;
                    let (s, co) = (sin(w * x), cos(w * x));
                    out[0] += ck * co;
                    out[1] -= ck * w * s;
                    out[2] -= ck * w * w * co;
                }
                out
            }
            BoundaryFn::SinPi(c) => {
                let mut out = [0.0; 3];
                for (k, ck) in c.iter().enumerate() {
                    let w = k as f64 * PI;
                    let (s, co) = (sin(w * x), cos(w * x));
                    out[0] += ck * s;
                    out[1] += ck * w * co;
                    out[2] -= ck * w * w * s;
                }
                out
            }
            BoundaryFn::Poly(c) => {
                // Horner on value and both derivatives
                let (mut p, mut dp, mut ddp) = (0.0, 0.0, 0.0);
                for ck in c {
                    ddp = ddp * x + 2.0 * dp;
                    dp = dp * x + p;
                    p = p * x + ck;
                }
                [p, dp, ddp]
            }
            BoundaryFn::Table(samples) => table_eval(samples, x),
        }
    }

    /// Magnitude scale used for compatibility tolerances.
    pub fn scale(&self) -> f64 {
        match self {
            BoundaryFn::Zero => 0.0,
            BoundaryFn::CosPi(c) | BoundaryFn::SinPi(c) | BoundaryFn::Poly(c) | BoundaryFn::Table(c) => {
                c.iter().map(|v| v.abs()).sum()
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            BoundaryFn::Zero => true,
            BoundaryFn::CosPi(c) | BoundaryFn::SinPi(c) | BoundaryFn::Poly(c) | BoundaryFn::Table(c) => {
                c.iter().all(|v| *v == 0.0)
            }
        }
    }
}

fn table_eval(samples: &[f64], x: f64) -> [f64; 3] {
    let m = samples.len();
    match m {
        0 => return [0.0; 3],
        1 => return [samples[0], 0.0, 0.0],
        _ => {}
    }
    let h = 2.0 / (m - 1) as f64;
    let slope = |k: usize| -> f64 {
        if m == 2 {
            (samples[1] - samples[0]) / h
        } else if k == 0 {
            (-3.0 * samples[0] + 4.0 * samples[1] - samples[2]) / (2.0 * h)
        } else if k == m - 1 {
            (3.0 * samples[m - 1] - 4.0 * samples[m - 2] + samples[m - 3]) / (2.0 * h)
        } else {
            (samples[k + 1] - samples[k - 1]) / (2.0 * h)
        }
    };
    let x = x.clamp(-1.0, 1.0);
    let k = (((x + 1.0) / h) as usize).min(m - 2);
    let t = (x + 1.0 - k as f64 * h) / h;
    let (y0, y1) = (samples[k], samples[k + 1]);
    let (s0, s1) = (slope(k) * h, slope(k + 1) * h);
    let t2 = t * t;
    let t3 = t2 * t;
    let value = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * s0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * s1;
    let dt = (6.0 * t2 - 6.0 * t) * y0 + (3.0 * t2 - 4.0 * t + 1.0) * s0 + (-6.0 * t2 + 6.0 * t) * y1
        + (3.0 * t2 - 2.0 * t) * s1;
    let dtt = (12.0 * t - 6.0) * y0 + (6.0 * t - 4.0) * s0 + (-12.0 * t + 6.0) * y1 + (6.0 * t - 2.0) * s1;
    [value, dt / h, dtt / (h * h)]
}

/// Product f(r) g(x3).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeparableFn {
    pub r_part: BoundaryFn,
    pub x3_part: BoundaryFn,
}

impl SeparableFn {
    pub fn value(&self, r: f64, x3: f64) -> f64 {
        if self.r_part.is_zero() || self.x3_part.is_zero() {
            return 0.0;
        }
        self.r_part.value(r) * self.x3_part.value(x3)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundaryPerturbation {
    pub eps: f64,
    pub u2_en: BoundaryFn,
    pub u3_en: BoundaryFn,
    pub a_en: BoundaryFn,
    pub k_en: BoundaryFn,
    pub phi_en: BoundaryFn,
    pub u1_ex: BoundaryFn,
    pub phi_ex: BoundaryFn,
    pub b_tilde: SeparableFn,
}

const COMPAT_TOL: f64 = 1e-10;

impl BoundaryPerturbation {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self { eps, ..self.clone() }
    }

    /// Wall compatibility of the boundary data; the error names the first
    /// failing condition.
    pub fn check_compatibility(&self) -> Result<()> {
        let check = |name: &str, f: &BoundaryFn, order: usize| -> Result<()> {
            let tol = COMPAT_TOL * (1.0 + f.scale());
            for wall in [1.0, -1.0] {
                let v = f.eval(wall)[order];
                if !(v.abs() <= tol) {
                    let primes = ["", "'", "''"][order];
                    return Err(Error::Compatibility(format!(
                        "{name}{primes}({}) != 0",
                        if wall > 0.0 { "1" } else { "-1" }
                    )));
                }
            }
            Ok(())
        };
        check("u3_en", &self.u3_en, 0)?;
        check("u3_en", &self.u3_en, 2)?;
        check("u1_ex", &self.u1_ex, 1)?;
        check("u2_en", &self.u2_en, 1)?;
        check("k_en", &self.k_en, 1)?;
        check("a_en", &self.a_en, 1)?;
        check("phi_en", &self.phi_en, 1)?;
        check("phi_ex", &self.phi_ex, 1)?;
        if !self.b_tilde.r_part.is_zero() {
            check("b_tilde_x3", &self.b_tilde.x3_part, 1)?;
        }
        if !self.eps.is_finite() {
            return Err(Error::Compatibility(format!("eps = {} is not finite", self.eps)));
        }
        Ok(())
    }

    /// Linear blend of the potential data between the cylinders.
    pub fn phi1(&self, r0: f64, r1: f64, r: f64, x3: f64) -> f64 {
        let l = r1 - r0;
        self.eps * ((r1 - r) / l * self.phi_en.value(x3) + (r - r0) / l * self.phi_ex.value(x3))
    }

    /// r times the cylindrical Laplacian of the blend.
    pub fn r_laplacian_phi1(&self, r0: f64, r1: f64, r: f64, x3: f64) -> f64 {
        let l = r1 - r0;
        let dr = (self.phi_ex.value(x3) - self.phi_en.value(x3)) / l;
        let dzz = (r1 - r) / l * self.phi_en.d2(x3) + (r - r0) / l * self.phi_ex.d2(x3);
        self.eps * (dr + r * dzz)
    }
}
