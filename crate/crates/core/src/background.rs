//! Radial background flows: RK4 integration of the reduced ODE for density
//! and electric field, Mach numbers, sonic radius and the decay bound.

use alloc::vec::Vec;

use crate::decomposition::bernoulli_density;
use crate::math::pow;
use crate::{Error, Result};

/// Abort threshold for 1 - M1^2.
pub const DEGENERACY_FLOOR: f64 = 1e-8;
/// Bisection target for | |M|^2 - 1 | at the sonic radius.
pub const SONIC_TOL: f64 = 1e-10;
pub const DEFAULT_NODES: usize = 2049;
pub const MIN_NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InletData {
    pub gamma: f64,
    pub rho0: f64,
    pub u10: f64,
    pub u20: f64,
    pub a0: f64,
    pub e0: f64,
    pub b0: f64,
    pub r0: f64,
    pub r1: f64,
}

impl InletData {
    pub fn sound_speed_sq(&self) -> f64 {
        self.gamma * self.a0 * pow(self.rho0, self.gamma - 1.0)
    }

    /// Mass flux r0 rho0 U10.
    pub fn m1(&self) -> f64 {
        self.r0 * self.rho0 * self.u10
    }

    /// Angular momentum r0 U20.
    pub fn m2(&self) -> f64 {
        self.r0 * self.u20
    }

    /// Bernoulli constant at the inlet, where the potential vanishes.
    pub fn bernoulli_constant(&self) -> f64 {
        0.5 * (self.u10 * self.u10 + self.u20 * self.u20)
            + self.gamma * self.a0 * pow(self.rho0, self.gamma - 1.0) / (self.gamma - 1.0)
    }

    fn invariant_violation(&self) -> Option<&'static str> {
        let values = [
            self.gamma, self.rho0, self.u10, self.u20, self.a0, self.e0, self.b0, self.r0, self.r1,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Some("non-finite inlet value");
        }
        if self.gamma <= 1.0 {
            return Some("gamma <= 1");
        }
        if self.rho0 <= 0.0 {
            return Some("rho0 <= 0");
        }
        if self.u10 <= 0.0 {
            return Some("u10 <= 0");
        }
        if self.a0 <= 0.0 {
            return Some("a0 <= 0");
        }
        if self.e0 <= 0.0 {
            return Some("e0 <= 0");
        }
        if self.r0 <= 0.0 || self.r1 <= self.r0 {
            return Some("need 0 < r0 < r1");
        }
        if self.rho0 <= self.b0 {
            return Some("rho0 <= b0");
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowRegime {
    Subsonic,
    TransonicCandidate,
    Transonic { sonic_radius: f64 },
    Invalid(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MachState {
    pub m1_sq: f64,
    pub m2_sq: f64,
}

impl MachState {
    pub fn total(&self) -> f64 {
        self.m1_sq + self.m2_sq
    }
}

/// Background state at a single radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialState {
    pub r: f64,
    pub rho: f64,
    pub u1: f64,
    pub u2: f64,
    pub e_field: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundProfile {
    pub r_nodes: Vec<f64>,
    pub rho: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub e_field: Vec<f64>,
    pub phi: Vec<f64>,
    pub m1: f64,
    pub m2: f64,
    pub a_const: f64,
    pub regime: FlowRegime,
    pub inlet: InletData,
}

pub fn classify_inlet(inlet: &InletData) -> FlowRegime {
    if let Some(reason) = inlet.invariant_violation() {
        return FlowRegime::Invalid(reason);
    }
    let c2 = inlet.sound_speed_sq();
    let radial = inlet.u10 * inlet.u10;
    let speed = radial + inlet.u20 * inlet.u20;
    if c2 <= radial {
        FlowRegime::Invalid("c0^2 <= U10^2")
    } else if c2 > speed {
        FlowRegime::Subsonic
    } else if c2 < speed {
        FlowRegime::TransonicCandidate
    } else {
        FlowRegime::Invalid("c0^2 == U10^2 + U20^2")
    }
}

/// Right-hand side of the reduced system in (rho, r E).
fn radial_rhs(inlet: &InletData, r: f64, y: [f64; 2]) -> Result<[f64; 2]> {
    let [rho, re] = y;
    if !rho.is_finite() || !re.is_finite() {
        return Err(Error::NonFiniteState { r });
    }
    if rho <= 0.0 {
        return Err(Error::NonPositiveDensity { r });
    }
    let e = re / r;
    let u1 = inlet.m1() / (r * rho);
    let u2 = inlet.m2() / r;
    let c2 = inlet.gamma * inlet.a0 * pow(rho, inlet.gamma - 1.0);
    let margin = 1.0 - u1 * u1 / c2;
    if margin < DEGENERACY_FLOOR {
        return Err(Error::RadialSonicDegeneracy { r, margin });
    }
    let drho = rho * (u1 * u1 + u2 * u2 + e * r) / (r * (c2 - u1 * u1));
    let dre = r * (rho - inlet.b0);
    Ok([drho, dre])
}

fn rk4_step(inlet: &InletData, r: f64, y: [f64; 2], h: f64) -> Result<[f64; 2]> {
    let k1 = radial_rhs(inlet, r, y)?;
    let k2 = radial_rhs(inlet, r + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]])?;
    let k3 = radial_rhs(inlet, r + 0.5 * h, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]])?;
    let k4 = radial_rhs(inlet, r + h, [y[0] + h * k3[0], y[1] + h * k3[1]])?;
    let next = [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ];
    // validates the new state (density sign, degeneracy)
    radial_rhs(inlet, r + h, next)?;
    Ok(next)
}

pub fn integrate_background(inlet: &InletData, n_nodes: usize) -> Result<BackgroundProfile> {
    let candidate = classify_inlet(inlet);
    if let FlowRegime::Invalid(reason) = candidate {
        return Err(Error::InvalidInput(reason.into()));
    }
    if n_nodes < MIN_NODES {
        return Err(Error::NotEnoughNodes { needed: MIN_NODES, got: n_nodes });
    }
    let h = (inlet.r1 - inlet.r0) / (n_nodes - 1) as f64;
    let m1 = inlet.m1();
    let m2 = inlet.m2();

    let mut r_nodes = Vec::with_capacity(n_nodes);
    let mut rho = Vec::with_capacity(n_nodes);
    let mut e_field = Vec::with_capacity(n_nodes);
    let mut y = [inlet.rho0, inlet.r0 * inlet.e0];
    radial_rhs(inlet, inlet.r0, y)?;
    for i in 0..n_nodes {
        let r = if i + 1 == n_nodes { inlet.r1 } else { inlet.r0 + i as f64 * h };
        if i > 0 {
            let r_prev = r_nodes[i - 1];
            y = rk4_step(inlet, r_prev, y, r - r_prev)?;
        }
        r_nodes.push(r);
        rho.push(y[0]);
        e_field.push(y[1] / r);
    }

    let u1: Vec<f64> = r_nodes.iter().zip(&rho).map(|(r, d)| m1 / (r * d)).collect();
    let u2: Vec<f64> = r_nodes.iter().map(|r| m2 / r).collect();
    let mut phi = Vec::with_capacity(n_nodes);
    phi.push(0.0);
    for i in 1..n_nodes {
        let dr = r_nodes[i] - r_nodes[i - 1];
        phi.push(phi[i - 1] + 0.5 * dr * (e_field[i] + e_field[i - 1]));
    }

    let mut profile = BackgroundProfile {
        r_nodes,
        rho,
        u1,
        u2,
        e_field,
        phi,
        m1,
        m2,
        a_const: inlet.a0,
        regime: candidate,
        inlet: *inlet,
    };
    profile.regime = match candidate {
        FlowRegime::Subsonic => {
            if mach_profile(&profile).iter().all(|m| m.total() < 1.0) {
                FlowRegime::Subsonic
            } else {
                FlowRegime::Invalid("subsonic inlet lost subsonicity")
            }
        }
        _ => match find_sonic_radius(&profile)? {
            Some(sonic_radius) => FlowRegime::Transonic { sonic_radius },
            None => FlowRegime::TransonicCandidate,
        },
    };
    Ok(profile)
}

impl BackgroundProfile {
    pub fn len(&self) -> usize {
        self.r_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_nodes.is_empty()
    }

    pub fn gamma(&self) -> f64 {
        self.inlet.gamma
    }

    pub fn b0(&self) -> f64 {
        self.inlet.b0
    }

    pub fn bernoulli_constant(&self) -> f64 {
        self.inlet.bernoulli_constant()
    }

    pub fn sound_speed_sq(&self, i: usize) -> f64 {
        self.inlet.gamma * self.a_const * pow(self.rho[i], self.inlet.gamma - 1.0)
    }

    /// Background at an arbitrary radius: one RK4 step from the node below,
    /// the potential by the matching partial trapezoid.
    pub fn state_at(&self, r: f64) -> Result<RadialState> {
        let n = self.len();
        if n < 2 {
            return Err(Error::NotEnoughNodes { needed: 2, got: n });
        }
        let (lo, hi) = (self.r_nodes[0], self.r_nodes[n - 1]);
        if !(r >= lo && r <= hi) {
            return Err(Error::InvalidInput(alloc::format!("radius {r} outside [{lo}, {hi}]")));
        }
        let h = (hi - lo) / (n - 1) as f64;
        let mut i = (((r - lo) / h) as usize).min(n - 2);
        while i > 0 && self.r_nodes[i] > r {
            i -= 1;
        }
        while i + 2 < n && self.r_nodes[i + 1] <= r {
            i += 1;
        }
        let dr = r - self.r_nodes[i];
        let (rho, re) = if dr == 0.0 {
            (self.rho[i], self.e_field[i] * self.r_nodes[i])
        } else {
            let y = rk4_step(&self.inlet, self.r_nodes[i], [self.rho[i], self.e_field[i] * self.r_nodes[i]], dr)?;
            (y[0], y[1])
        };
        let e_field = re / r;
        Ok(RadialState {
            r,
            rho,
            u1: self.m1 / (r * rho),
            u2: self.m2 / r,
            e_field,
            phi: self.phi[i] + 0.5 * dr * (self.e_field[i] + e_field),
        })
    }
}

pub fn mach_profile(profile: &BackgroundProfile) -> Vec<MachState> {
    (0..profile.len())
        .map(|i| {
            let c2 = profile.sound_speed_sq(i);
            MachState {
                m1_sq: profile.u1[i] * profile.u1[i] / c2,
                m2_sq: profile.u2[i] * profile.u2[i] / c2,
            }
        })
        .collect()
}

fn sonic_gap(profile: &BackgroundProfile, r: f64) -> Result<f64> {
    let s = profile.state_at(r)?;
    let c2 = profile.inlet.gamma * profile.a_const * pow(s.rho, profile.inlet.gamma - 1.0);
    Ok((s.u1 * s.u1 + s.u2 * s.u2) / c2 - 1.0)
}

pub fn find_sonic_radius(profile: &BackgroundProfile) -> Result<Option<f64>> {
    let g: Vec<f64> = mach_profile(profile).iter().map(|m| m.total() - 1.0).collect();
    let mut at_node = None;
    let mut bracket = None;
    let mut count = 0;
    for (i, gi) in g.iter().enumerate() {
        if *gi == 0.0 {
            count += 1;
            at_node = Some(i);
        } else if i + 1 < g.len() && gi * g[i + 1] < 0.0 {
            count += 1;
            bracket = Some(i);
        }
    }
    if count > 1 {
        return Err(Error::MultipleCrossings { count });
    }
    if let Some(i) = at_node {
        return Ok(Some(profile.r_nodes[i]));
    }
    let Some(i) = bracket else {
        return Ok(None);
    };
    let (mut lo, mut hi) = (profile.r_nodes[i], profile.r_nodes[i + 1]);
    let lo_sign = g[i] > 0.0;
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let gm = sonic_gap(profile, mid)?;
        if gm.abs() <= SONIC_TOL || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        if (gm > 0.0) == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(mid))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayReport {
    /// max over nodes of f(r) - r0^2 f(r0) / r^2
    pub max_violation: f64,
    pub at_r: f64,
}

pub fn check_decay_bound(profile: &BackgroundProfile) -> DecayReport {
    decay_violation(&profile.r_nodes, &mach_profile(profile))
}

pub fn decay_violation(r_nodes: &[f64], mach: &[MachState]) -> DecayReport {
    let r0 = r_nodes[0];
    let f0 = mach[0].total();
    let mut report = DecayReport { max_violation: f64::NEG_INFINITY, at_r: r0 };
    for (r, m) in r_nodes.iter().zip(mach) {
        let v = m.total() - r0 * r0 * f0 / (r * r);
        if v > report.max_violation {
            report = DecayReport { max_violation: v, at_r: *r };
        }
    }
    report
}

/// Closed-form radial derivatives of (M1^2, M2^2, |M|^2) at a node.
pub fn mach_derivatives(gamma: f64, r: f64, e_field: f64, c_sq: f64, m: MachState) -> [f64; 3] {
    let (m1, m2) = (m.m1_sq, m.m2_sq);
    let total = m1 + m2;
    let denom = 1.0 - m1;
    let er = e_field * r / c_sq;
    let d1 = -m1 / (r * denom) * ((gamma - 1.0) * m1 + (gamma + 1.0) * m2 + (gamma + 1.0) * er + 2.0);
    let d2 = -m2 / (r * denom) * ((gamma - 3.0) * m1 + (gamma - 1.0) * m2 + (gamma - 1.0) * er + 2.0);
    let dt = -total / (r * denom) * ((gamma - 1.0) * total + 2.0)
        - ((gamma + 1.0) * m1 + (gamma - 1.0) * m2) * e_field / (c_sq * denom);
    [d1, d2, dt]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachOdeCheck {
    pub max_m1: f64,
    pub max_m2: f64,
    pub max_total: f64,
}

impl MachOdeCheck {
    pub fn max(&self) -> f64 {
        self.max_m1.max(self.max_m2).max(self.max_total)
    }
}

/// Central differences of the Mach numbers against the closed-form slopes.
pub fn cross_check_mach_ode(profile: &BackgroundProfile) -> Result<MachOdeCheck> {
    let n = profile.len();
    if n < 3 {
        return Err(Error::NotEnoughNodes { needed: 3, got: n });
    }
    let mach = mach_profile(profile);
    let gamma = profile.gamma();
    let mut check = MachOdeCheck { max_m1: 0.0, max_m2: 0.0, max_total: 0.0 };
    for i in 1..n - 1 {
        let span = profile.r_nodes[i + 1] - profile.r_nodes[i - 1];
        let fd = [
            (mach[i + 1].m1_sq - mach[i - 1].m1_sq) / span,
            (mach[i + 1].m2_sq - mach[i - 1].m2_sq) / span,
            (mach[i + 1].total() - mach[i - 1].total()) / span,
        ];
        let exact = mach_derivatives(
            gamma,
            profile.r_nodes[i],
            profile.e_field[i],
            profile.sound_speed_sq(i),
            mach[i],
        );
        check.max_m1 = check.max_m1.max((fd[0] - exact[0]).abs());
        check.max_m2 = check.max_m2.max((fd[1] - exact[1]).abs());
        check.max_total = check.max_total.max((fd[2] - exact[2]).abs());
    }
    Ok(check)
}

/// Max over interior nodes of |central difference of (r E) - r (rho - b0)|.
pub fn radial_poisson_residual(profile: &BackgroundProfile) -> Result<f64> {
    let n = profile.len();
    if n < 3 {
        return Err(Error::NotEnoughNodes { needed: 3, got: n });
    }
    let re = |i: usize| profile.r_nodes[i] * profile.e_field[i];
    let mut worst = 0.0_f64;
    for i in 1..n - 1 {
        let d = (re(i + 1) - re(i - 1)) / (profile.r_nodes[i + 1] - profile.r_nodes[i - 1]);
        let rhs = profile.r_nodes[i] * (profile.rho[i] - profile.b0());
        worst = worst.max((d - rhs).abs());
    }
    Ok(worst)
}

/// Background restricted to a set of radii, with the density taken from the
/// Bernoulli law at the inlet constants.
#[derive(Debug, Clone, PartialEq)]
pub struct GridBackground {
    pub gamma: f64,
    pub a0: f64,
    pub k0: f64,
    pub b0: f64,
    pub r: Vec<f64>,
    pub rho: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub phi: Vec<f64>,
    pub e_field: Vec<f64>,
    pub c_sq: Vec<f64>,
}

impl GridBackground {
    pub fn sample(profile: &BackgroundProfile, radii: &[f64]) -> Result<Self> {
        let gamma = profile.gamma();
        let a0 = profile.a_const;
        let k0 = profile.bernoulli_constant();
        let mut bg = GridBackground {
            gamma,
            a0,
            k0,
            b0: profile.b0(),
            r: Vec::with_capacity(radii.len()),
            rho: Vec::with_capacity(radii.len()),
            u1: Vec::with_capacity(radii.len()),
            u2: Vec::with_capacity(radii.len()),
            phi: Vec::with_capacity(radii.len()),
            e_field: Vec::with_capacity(radii.len()),
            c_sq: Vec::with_capacity(radii.len()),
        };
        for &r in radii {
            let s = profile.state_at(r)?;
            let speed_sq = s.u1 * s.u1 + s.u2 * s.u2;
            let rho = bernoulli_density(gamma, a0, k0, s.phi, speed_sq)?;
            bg.r.push(r);
            bg.rho.push(rho);
            bg.u1.push(s.u1);
            bg.u2.push(s.u2);
            bg.phi.push(s.phi);
            bg.e_field.push(s.e_field);
            bg.c_sq.push((gamma - 1.0) * (k0 + s.phi - 0.5 * speed_sq));
        }
        Ok(bg)
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// Radial Mach number squared at sample i.
    pub fn m1_sq(&self, i: usize) -> f64 {
        self.u1[i] * self.u1[i] / self.c_sq[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn subsonic_gamma2() -> InletData {
        InletData {
            gamma: 2.0,
            rho0: 1.0,
            u10: 0.5,
            u20: 0.5,
            a0: 1.0,
            e0: 0.1,
            b0: 0.5,
            r0: 1.0,
            r1: 2.0,
        }
    }

    fn transonic_inlet(r1: f64) -> InletData {
        InletData {
            gamma: 5.0 / 3.0,
            rho0: 1.0,
            u10: 0.8,
            u20: 1.5,
            a0: 1.0,
            e0: 0.1,
            b0: 0.5,
            r0: 1.0,
            r1,
        }
    }

    /// Independent RK4 on (rho, E) with the potential-free form of the ODE,
    /// refined twice and Richardson-extrapolated. Returns (rho, |M|^2) at r1.
    fn oracle_end_state(inlet: &InletData, steps: usize) -> (f64, f64) {
        let run = |n: usize| -> (f64, f64) {
            let g = inlet.gamma;
            let (m1, m2) = (inlet.r0 * inlet.rho0 * inlet.u10, inlet.r0 * inlet.u20);
            let f = |r: f64, y: [f64; 2]| -> [f64; 2] {
                let (rho, e) = (y[0], y[1]);
                let u1 = m1 / (r * rho);
                let u2 = m2 / r;
                let c2 = g * inlet.a0 * rho.powf(g - 1.0);
                let drho = rho * (u1 * u1 + u2 * u2 + e * r) / (r * (c2 - u1 * u1));
                // (rE)' = r(rho - b0)  =>  E' = rho - b0 - E / r
                [drho, rho - inlet.b0 - e / r]
            };
            let h = (inlet.r1 - inlet.r0) / n as f64;
            let mut y = [inlet.rho0, inlet.e0];
            for k in 0..n {
                let r = inlet.r0 + k as f64 * h;
                let k1 = f(r, y);
                let k2 = f(r + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
                let k3 = f(r + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
                let k4 = f(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
                for j in 0..2 {
                    y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
                }
            }
            let r = inlet.r1;
            let c2 = g * inlet.a0 * y[0].powf(g - 1.0);
            let u1 = m1 / (r * y[0]);
            let u2 = m2 / r;
            (y[0], (u1 * u1 + u2 * u2) / c2)
        };
        let (a, b) = (run(steps), run(2 * steps));
        ((16.0 * b.0 - a.0) / 15.0, (16.0 * b.1 - a.1) / 15.0)
    }

    /// Sonic radius by bisection on linear interpolation of a dense profile.
    fn dense_sonic_oracle(inlet: &InletData) -> Option<f64> {
        let p = integrate_background(inlet, 100_001).unwrap();
        let g: Vec<f64> = mach_profile(&p).iter().map(|m| m.total() - 1.0).collect();
        let i = (0..g.len() - 1).find(|&i| g[i] > 0.0 && g[i + 1] <= 0.0)?;
        let (r_a, r_b) = (p.r_nodes[i], p.r_nodes[i + 1]);
        // quadratic through nodes i-1, i, i+1 (or i, i+1, i+2)
        let j = if i > 0 { i - 1 } else { i };
        let (xs, ys) = ([p.r_nodes[j], p.r_nodes[j + 1], p.r_nodes[j + 2]], [g[j], g[j + 1], g[j + 2]]);
        let q = |x: f64| {
            let mut s = 0.0;
            for a in 0..3 {
                let mut l = ys[a];
                for b in 0..3 {
                    if a != b {
                        l *= (x - xs[b]) / (xs[a] - xs[b]);
                    }
                }
                s += l;
            }
            s
        };
        let (mut lo, mut hi) = (r_a, r_b);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if q(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_inlet(&subsonic_gamma2()), FlowRegime::Subsonic);
        assert_eq!(classify_inlet(&transonic_inlet(10.0)), FlowRegime::TransonicCandidate);
        let bad = InletData { rho0: 0.4, ..subsonic_gamma2() };
        assert_eq!(classify_inlet(&bad), FlowRegime::Invalid("rho0 <= b0"));
        let radial_super = InletData { u10: 1.5, ..subsonic_gamma2() };
        assert_eq!(classify_inlet(&radial_super), FlowRegime::Invalid("c0^2 <= U10^2"));
    }

    #[test]
    fn invalid_inlet_is_rejected_by_integration() {
        let bad = InletData { rho0: 0.4, ..subsonic_gamma2() };
        assert!(matches!(integrate_background(&bad, 101), Err(Error::InvalidInput(_))));
        assert!(matches!(
            integrate_background(&subsonic_gamma2(), 8),
            Err(Error::NotEnoughNodes { needed: 16, got: 8 })
        ));
    }

    #[test]
    fn zero_swirl_and_exact_mass_flux() {
        let inlet = InletData { u20: 0.0, ..subsonic_gamma2() };
        let p = integrate_background(&inlet, 1001).unwrap();
        assert!(p.u2.iter().all(|&v| v == 0.0));
        let worst = (0..p.len())
            .map(|i| (p.r_nodes[i] * p.rho[i] * p.u1[i] - 0.5).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-12, "{worst}");
        assert_eq!(p.phi[0], 0.0);
        assert_eq!(p.regime, FlowRegime::Subsonic);
    }

    #[test]
    fn end_state_matches_richardson_oracle() {
        let inlet = InletData { gamma: 5.0 / 3.0, ..subsonic_gamma2() };
        let p = integrate_background(&inlet, 1001).unwrap();
        let (rho_ref, mach_ref) = oracle_end_state(&inlet, 4000);
        let last = p.len() - 1;
        let mach = mach_profile(&p)[last].total();
        assert!((p.rho[last] - rho_ref).abs() <= 1e-8, "{} {}", p.rho[last], rho_ref);
        assert!((mach - mach_ref).abs() <= 1e-8, "{mach} {mach_ref}");
    }

    #[test]
    fn mach_at_inlet() {
        let p = integrate_background(&subsonic_gamma2(), 1001).unwrap();
        let m = mach_profile(&p)[0];
        assert!((m.m1_sq - 0.125).abs() < 1e-15);
        assert!((m.m2_sq - 0.125).abs() < 1e-15);
        let no_swirl = integrate_background(&InletData { u20: 0.0, ..subsonic_gamma2() }, 101).unwrap();
        assert_eq!(mach_profile(&no_swirl)[50].m2_sq, 0.0);
    }

    #[test]
    fn interior_mach_matches_oracle() {
        let inlet = transonic_inlet(3.0);
        let p = integrate_background(&inlet, 2001).unwrap();
        let mid = 1000;
        let truncated = InletData { r1: p.r_nodes[mid], ..inlet };
        let (_, mach_ref) = oracle_end_state(&truncated, 4000);
        assert!((mach_profile(&p)[mid].total() - mach_ref).abs() <= 1e-8);
    }

    #[test]
    fn sonic_radius_matches_dense_oracle() {
        let inlet = transonic_inlet(5.0);
        let p = integrate_background(&inlet, 4097).unwrap();
        let rc = find_sonic_radius(&p).unwrap().expect("crossing");
        let oracle = dense_sonic_oracle(&inlet).unwrap();
        assert!((rc - oracle).abs() <= 1e-8, "{rc} {oracle}");
        assert_eq!(p.regime, FlowRegime::Transonic { sonic_radius: rc });
        assert!(rc > inlet.r0 && rc < inlet.r1);

        let short = InletData { r1: 0.5 * (inlet.r0 + oracle), ..inlet };
        let q = integrate_background(&short, 2049).unwrap();
        assert_eq!(find_sonic_radius(&q).unwrap(), None);
        assert_eq!(q.regime, FlowRegime::TransonicCandidate);
    }

    #[test]
    fn subsonic_has_no_sonic_radius() {
        let p = integrate_background(&subsonic_gamma2(), 513).unwrap();
        assert_eq!(find_sonic_radius(&p).unwrap(), None);
    }

    #[test]
    fn sonic_node_tie_breaks_to_node() {
        let mut p = integrate_background(&transonic_inlet(5.0), 257).unwrap();
        let rc = find_sonic_radius(&p).unwrap().unwrap();
        let i = p.r_nodes.iter().position(|&r| r > rc).unwrap();
        // force |M|^2 = 1 exactly at node i by rescaling the swirl there
        let c2 = p.sound_speed_sq(i);
        p.u2[i] = (c2 - p.u1[i] * p.u1[i]).sqrt();
        let m = mach_profile(&p)[i].total();
        if m == 1.0 {
            assert_eq!(find_sonic_radius(&p).unwrap(), Some(p.r_nodes[i]));
        }
    }

    #[test]
    fn corrupted_profile_reports_multiple_crossings() {
        let mut p = integrate_background(&transonic_inlet(5.0), 257).unwrap();
        // a supersonic spike well past the sonic radius
        let i = p.len() - 20;
        p.u2[i] = (2.0 * p.sound_speed_sq(i) - p.u1[i] * p.u1[i]).sqrt();
        let out = find_sonic_radius(&p);
        assert!(matches!(out, Err(Error::MultipleCrossings { count: 3 })), "{out:?}");
    }

    #[test]
    fn decay_bound_holds_and_detects_violation() {
        let p = integrate_background(&transonic_inlet(5.0), 2049).unwrap();
        let report = check_decay_bound(&p);
        assert!(report.max_violation <= 1e-8, "{report:?}");
        let mut mach = mach_profile(&p);
        let v0 = decay_violation(&p.r_nodes[..1], &mach[..1]);
        assert_eq!(v0.max_violation, 0.0);
        let r = p.r_nodes[700];
        mach[700].m2_sq += mach[0].total() * p.r_nodes[0] * p.r_nodes[0] / (r * r);
        let bad = decay_violation(&p.r_nodes, &mach);
        assert!(bad.max_violation > 0.0);
        assert_eq!(bad.at_r, p.r_nodes[700]);
    }

    #[test]
    fn mach_ode_cross_check_is_second_order() {
        let inlet = subsonic_gamma2();
        let coarse = cross_check_mach_ode(&integrate_background(&inlet, 1001).unwrap()).unwrap().max();
        let fine = cross_check_mach_ode(&integrate_background(&inlet, 2001).unwrap()).unwrap().max();
        let ratio = coarse / fine;
        assert!(coarse < 1e-5, "{coarse}");
        assert!((ratio - 4.0).abs() < 0.4, "{ratio}");
    }

    #[test]
    fn mach_ode_needs_nodes() {
        let p = integrate_background(&subsonic_gamma2(), 64).unwrap();
        let single = BackgroundProfile {
            r_nodes: alloc::vec![p.r_nodes[0]],
            rho: alloc::vec![p.rho[0]],
            u1: alloc::vec![p.u1[0]],
            u2: alloc::vec![p.u2[0]],
            e_field: alloc::vec![p.e_field[0]],
            phi: alloc::vec![0.0],
            ..p
        };
        assert_eq!(cross_check_mach_ode(&single), Err(Error::NotEnoughNodes { needed: 3, got: 1 }));
    }

    #[test]
    fn subsonic_total_mach_decreases() {
        let p = integrate_background(&subsonic_gamma2(), 1001).unwrap();
        let mach = mach_profile(&p);
        for i in 1..p.len() - 1 {
            if p.e_field[i] > 0.0 {
                let d = mach_derivatives(2.0, p.r_nodes[i], p.e_field[i], p.sound_speed_sq(i), mach[i]);
                assert!(d[2] < 0.0);
                assert!(mach[i + 1].total() < mach[i].total());
            }
        }
    }

    #[test]
    fn poisson_residual_is_second_order() {
        let inlet = subsonic_gamma2();
        let a = radial_poisson_residual(&integrate_background(&inlet, 257).unwrap()).unwrap();
        let b = radial_poisson_residual(&integrate_background(&inlet, 513).unwrap()).unwrap();
        assert!((a / b - 4.0).abs() < 1.0, "{}", a / b);
    }

    #[test]
    fn state_at_nodes_and_between() {
        let p = integrate_background(&subsonic_gamma2(), 257).unwrap();
        let s = p.state_at(p.r_nodes[100]).unwrap();
        assert_eq!(s.rho, p.rho[100]);
        let mid = 0.5 * (p.r_nodes[100] + p.r_nodes[101]);
        let s = p.state_at(mid).unwrap();
        assert!(s.rho < p.rho[100] && s.rho > p.rho[101] || s.rho > p.rho[100] && s.rho < p.rho[101]);
        let end = p.state_at(2.0).unwrap();
        assert!((end.rho - p.rho[256]).abs() < 1e-13);
        assert!((end.phi - p.phi[256]).abs() < 1e-13);
        assert!(p.state_at(2.5).is_err());
    }

    #[test]
    fn grid_background_density_matches_profile() {
        let p = integrate_background(&subsonic_gamma2(), 2049).unwrap();
        let radii: Vec<f64> = (0..9).map(|k| 1.0 + k as f64 / 8.0).collect();
        let bg = GridBackground::sample(&p, &radii).unwrap();
        for (k, r) in radii.iter().enumerate() {
            let s = p.state_at(*r).unwrap();
            assert!((bg.rho[k] - s.rho).abs() < 1e-7, "{} {}", bg.rho[k], s.rho);
            let c2 = 2.0 * s.rho;
            assert!((bg.c_sq[k] - c2).abs() < 1e-7);
        }
    }

    fn subsonic_strategy() -> impl Strategy<Value = InletData> {
        (1.2f64..3.0, 0.5f64..1.5, 0.1f64..0.9, 0.01f64..0.3, 0.3f64..0.9, 0.0f64..1.0, 0.0f64..1.0)
            .prop_filter_map("subsonic", |(gamma, a0, m1f, e0, b0, swirl, split)| {
                let rho0 = 1.0;
                let c2 = gamma * a0;
                let total = 0.2 + 0.5 * split;
                let u10 = (m1f * total * c2).sqrt();
                let u20 = ((1.0 - m1f) * total * c2).sqrt() * swirl;
                let inlet = InletData { gamma, rho0, u10, u20, a0, e0, b0, r0: 1.0, r1: 2.0 };
                (classify_inlet(&inlet) == FlowRegime::Subsonic).then_some(inlet)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn conservation_holds_at_every_node(inlet in subsonic_strategy()) {
            let p = integrate_background(&inlet, 257).unwrap();
            for i in 0..p.len() {
                let r = p.r_nodes[i];
                prop_assert!((r * p.rho[i] * p.u1[i] - p.m1).abs() <= 1e-10 * p.m1.abs());
                prop_assert!((r * p.u2[i] - p.m2).abs() <= 1e-10 * p.m2.abs().max(1.0));
                prop_assert!(p.rho[i] > 0.0);
            }
        }

        #[test]
        fn field_monotonicity(inlet in subsonic_strategy()) {
            let p = integrate_background(&inlet, 257).unwrap();
            prop_assert_eq!(p.phi[0], 0.0);
            for i in 0..p.len() - 1 {
                let re = |k: usize| p.r_nodes[k] * p.e_field[k];
                if p.rho[i] > inlet.b0 && p.rho[i + 1] > inlet.b0 {
                    prop_assert!(re(i + 1) >= re(i));
                }
                if p.e_field[i] > 0.0 && p.e_field[i + 1] > 0.0 {
                    prop_assert!(p.phi[i + 1] > p.phi[i]);
                }
            }
        }

        #[test]
        fn mach_numbers_nonnegative(inlet in subsonic_strategy()) {
            let p = integrate_background(&inlet, 64).unwrap();
            for m in mach_profile(&p) {
                prop_assert!(m.m1_sq >= 0.0 && m.m2_sq >= 0.0);
                prop_assert!(m.m1_sq < 1.0);
            }
        }
    }
}
