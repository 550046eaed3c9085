use thiserror::Error;

use crate::labels::Transition;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid circuit specification: {0}")]
    InvalidCircuit(String),
    #[error("capacitance matrix is not positive definite")]
    NonPositiveDefinite,
    #[error("invalid Hilbert space: {0}")]
    InvalidSpace(String),
    #[error("invalid basis label `{0}`")]
    InvalidLabel(String),
    #[error("unknown transition `{0}`")]
    UnknownTransition(String),
    #[error("frame ledger admits no consistent state-phase assignment (cycle residual {residual:.3e} rad)")]
    InconsistentLedger { residual: f64 },
    #[error("invalid envelope: {0}")]
    InvalidEnvelope(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("step {step_s:.3e} s too coarse: halving changed the propagator by {change:.3e}")]
    StepTooCoarse { step_s: f64, change: f64 },
    #[error("T2 ({t2:.3e} s) exceeds 2*T1 ({t1:.3e} s) for mode {mode}: negative pure dephasing")]
    NegativeDephasing { mode: char, t1: f64, t2: f64 },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("frequency collision: {0}")]
    FrequencyCollision(String),
    #[error("Raman detuning must be non-zero")]
    ZeroDetuning,
    #[error("calibration did not converge: residual oscillation {residual:.3e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("decay fit failed: {0}")]
    FitFailure(String),
    #[error("unsupported Pauli term `{0}`")]
    UnsupportedTerm(String),
    #[error("invalid qudit ordering: {0}")]
    InvalidOrdering(String),
    #[error("insufficient shots after discard: {kept} < {required}")]
    InsufficientShots { kept: u64, required: u64 },
    #[error("confusion matrix is singular or ill-conditioned (condition number {condition:.3e})")]
    SingularConfusion { condition: f64 },
    #[error("optimizer stalled with residual norm {residual:.3e}")]
    OptimizerStall { residual: f64 },
    #[error("gate and reference configuration grids differ")]
    InconsistentGrid,
    #[error("matrix is not positive semidefinite (minimum eigenvalue {min_eigenvalue:.3e})")]
    NonPsdInput { min_eigenvalue: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// True for failures of a computation on valid input (non-convergence,
    /// ill-conditioning, stalls), false for rejected input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::InconsistentLedger { .. }
                | Error::StepTooCoarse { .. }
                | Error::NoConvergence { .. }
                | Error::FitFailure(_)
                | Error::InsufficientShots { .. }
                | Error::SingularConfusion { .. }
                | Error::OptimizerStall { .. }
                | Error::NonPsdInput { .. }
        )
    }

    pub(crate) fn unknown_transition(t: &Transition) -> Self {
        Error::UnknownTransition(t.to_string())
    }
}
