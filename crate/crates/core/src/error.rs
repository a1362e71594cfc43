use thiserror::Error;

use crate::hamiltonian::BlockId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian (defect {defect:.3e})")]
    NonHermitianInput { defect: f64 },
    #[error("matrix is not unitary (defect {defect:.3e})")]
    NonUnitaryInput { defect: f64 },
    #[error("state is not normalized (|norm - 1| = {deviation:.3e})")]
    NonNormalizedState { deviation: f64 },
    #[error("Hermitian eigensolver did not converge after {sweeps} sweeps (off-diagonal {off:.3e})")]
    EigenNotConverged { sweeps: usize, off: f64 },

    #[error("invalid field profile: {0}")]
    InvalidProfile(String),
    #[error("time {t} lies outside the tabulated range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("adiabaticity metric diverges at t = {t} (omega = {omega:.3e})")]
    DivergentMetric { t: f64, omega: f64 },

    #[error("orientation theta = {theta} is not supported here (only 0 and pi/2)")]
    UnsupportedOrientation { theta: f64 },
    #[error("invalid system parameters: {0}")]
    InvalidParams(String),
    #[error("the 2-3 block gap vanishes (A_perp = 0 with field along the axis)")]
    DegenerateGap,

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("block {block:?} is not available at theta = {theta}")]
    UnsupportedBlock { block: BlockId, theta: f64 },
    #[error("missing solution for block {0:?}")]
    MissingBlock(BlockId),
    #[error("step refinement failed to reach tolerance {tolerance:.1e} on [{t0}, {t1}] (estimate {estimate:.3e})")]
    ToleranceNotMet {
        tolerance: f64,
        estimate: f64,
        t0: f64,
        t1: f64,
    },
    #[error("quadrature failed on [{a}, {b}] (error estimate {estimate:.3e})")]
    QuadratureFailure { a: f64, b: f64, estimate: f64 },
    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("Landau-Zener oracle needs a nonzero sweep rate")]
    ZeroRate,
}

impl Error {
    /// Name of the subsystem that raised the error.
    pub fn module(&self) -> &'static str {
        use Error::*;
        match self {
            NonHermitianInput { .. }
            | NonUnitaryInput { .. }
            | NonNormalizedState { .. }
            | EigenNotConverged { .. } => "algebra",
            InvalidProfile(_) | OutOfRange { .. } | DivergentMetric { .. } => "field",
            UnsupportedOrientation { .. } | InvalidParams(_) => "hamiltonian",
            DegenerateGap => "frame",
            InvalidGrid(_)
            | UnsupportedBlock { .. }
            | MissingBlock(_)
            | ToleranceNotMet { .. }
            | QuadratureFailure { .. }
            | Consistency(_) => "propagate",
            ZeroRate => "analysis",
        }
    }
}
