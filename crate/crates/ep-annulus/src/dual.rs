//! Forward-mode dual numbers in three directions. Nesting `Dual<Dual<f64>>`
//! carries exact second derivatives.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy + Debug + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn cst(x: f64) -> Self;
    /// Innermost real part.
    fn re(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn powf(self, p: f64) -> Self;

    fn sqrt(self) -> Self {
        self.powf(0.5)
    }

    fn scale(self, s: f64) -> Self {
        self * Self::cst(s)
    }

    fn plus(self, s: f64) -> Self {
        self + Self::cst(s)
    }
}

impl Real for f64 {
    fn cst(x: f64) -> Self {
        x
    }
    fn re(&self) -> f64 {
        *self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<T> {
    pub v: T,
    pub d: [T; 3],
}

pub type D1 = Dual<f64>;
pub type D2 = Dual<Dual<f64>>;

impl<T: Real> Dual<T> {
    pub fn constant(v: T) -> Self {
        Self { v, d: [T::cst(0.0); 3] }
    }

    /// Independent variable number `k`.
    pub fn var(v: T, k: usize) -> Self {
        let mut d = [T::cst(0.0); 3];
        d[k] = T::cst(1.0);
        Self { v, d }
    }

    fn chain(self, v: T, dv: T) -> Self {
        Self { v, d: self.d.map(|x| x * dv) }
    }
}

/// The point (x0, x1, x2) seeded for second derivatives.
pub fn seed2(x: [f64; 3]) -> [D2; 3] {
    std::array::from_fn(|k| {
        let mut d = [D1::constant(0.0); 3];
        d[k] = D1::constant(1.0);
        Dual { v: D1::var(x[k], k), d }
    })
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { v: self.v + o.v, d: std::array::from_fn(|k| self.d[k] + o.d[k]) }
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self { v: self.v - o.v, d: std::array::from_fn(|k| self.d[k] - o.d[k]) }
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self { v: self.v * o.v, d: std::array::from_fn(|k| self.d[k] * o.v + self.v * o.d[k]) }
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.v / o.v;
        Self { v: q, d: std::array::from_fn(|k| (self.d[k] - q * o.d[k]) / o.v) }
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self { v: -self.v, d: self.d.map(|x| -x) }
    }
}

impl<T: Real> Real for Dual<T> {
    fn cst(x: f64) -> Self {
        Self::constant(T::cst(x))
    }
    fn re(&self) -> f64 {
        self.v.re()
    }
    fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.v.ln(), T::cst(1.0) / self.v)
    }
    fn powf(self, p: f64) -> Self {
        self.chain(self.v.powf(p), self.v.powf(p - 1.0).scale(p))
    }
}
