use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("radial sonic degeneracy at r = {r}: 1 - M1^2 = {margin:e}")]
    RadialSonicDegeneracy { r: f64, margin: f64 },
    #[error("non-positive density at r = {r}")]
    NonPositiveDensity { r: f64 },
    #[error("non-finite state at r = {r}")]
    NonFiniteState { r: f64 },
    #[error("{count} sonic crossings found, expected at most one")]
    MultipleCrossings { count: usize },
    #[error("need at least {needed} nodes, got {got}")]
    NotEnoughNodes { needed: usize, got: usize },
    #[error("radial velocity {value:e} below floor")]
    DegenerateRadialVelocity { value: f64 },
    #[error("vacuum state: Bernoulli argument {value:e} below floor")]
    VacuumState { value: f64 },
    #[error("odd extension needs zero wall values, found {value:e}")]
    OddExtensionMismatch { value: f64 },
    #[error("singular system at row {row}")]
    SingularSystem { row: usize },
    #[error("iterative solver stalled after {iterations} iterations, relative residual {residual:e}")]
    IterativeNoConvergence { iterations: usize, residual: f64 },
    #[error("deviation norm {norm:e} exceeds guard {guard:e}")]
    TrustRegionExceeded { norm: f64, guard: f64 },
    #[error("no contraction: increment ratio {ratio} at iteration {iteration}")]
    NoContraction { iteration: usize, ratio: f64 },
    #[error("no convergence in {max_iter} iterations, last increment {increment:e}")]
    MaxIterExceeded { max_iter: usize, increment: f64 },
    #[error("boundary data incompatible: {0}")]
    Compatibility(String),
}
