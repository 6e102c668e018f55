//! Steady Euler-Poisson flows in a concentric cylinder.
//!
//! Radial background flows, residual operators for the full cylindrical
//! system and its deformation-curl-Poisson form, and the axisymmetric
//! perturbation scheme (characteristic transport, coupled elliptic solve,
//! Picard iteration).

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod background;
pub mod boundary;
pub mod decomposition;
pub mod elliptic;
pub mod error;
pub mod grid;
pub mod iteration;
pub mod math;
pub mod sparse;
pub mod transport;

pub use background::{
    check_decay_bound, classify_inlet, cross_check_mach_ode, find_sonic_radius,
    integrate_background, mach_profile, BackgroundProfile, FlowRegime, GridBackground, InletData,
    MachState,
};
pub use boundary::{BoundaryFn, BoundaryPerturbation, SeparableFn};
pub use error::Error;
pub use grid::{Grid2D, Parity, ScalarField2D};
pub use iteration::{fixed_point_solve, SchemeOperators, SolveOptions, SolveReport};
pub use transport::DeviationField;

pub type Result<T> = core::result::Result<T, Error>;
