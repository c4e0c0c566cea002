use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T, E = SlqrError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SlqrError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e} exceeds {tolerance:.3e})")]
    Asymmetric { asymmetry: f64, tolerance: f64 },

    #[error("matrix contains non-finite entries ({context})")]
    NonFinite { context: &'static str },

    #[error("system is not mean-square stable: spectral radius {spectral_radius:.6} >= 1")]
    NotAsms { spectral_radius: f64 },

    #[error("gain is not stabilizing: closed-loop spectral radius {spectral_radius:.6} >= 1")]
    NotStabilizing { spectral_radius: f64 },

    #[error("singular linear system in {context}")]
    Singular { context: &'static str },

    #[error("ill-conditioned linear system in {context} (condition number {condition:.3e})")]
    IllConditioned { context: &'static str, condition: f64 },

    #[error("{context} is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite {
        context: &'static str,
        min_eigenvalue: f64,
    },

    #[error("eigenvalue solver failed to converge ({context})")]
    EigenSolver { context: &'static str },

    #[error("invalid system: {0}")]
    InvalidSystem(ValidationReport),

    #[error("need at least {required} initial vectors to make the initial moment positive definite, got {given}")]
    InsufficientInitialVectors { given: usize, required: usize },

    #[error("rollout batch is empty")]
    EmptyBatch,

    #[error("rollout {rollout_index} from initial vector {initial_index} diverged at step {step} (state norm {norm:.3e})")]
    RolloutDiverged {
        initial_index: usize,
        rollout_index: usize,
        step: usize,
        norm: f64,
    },

    #[error("learning diverged at iteration {iteration}: gain norm {gain_norm:.3e}")]
    LearningDiverged { iteration: usize, gain_norm: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SlqrError {
    pub(crate) fn dims(
        context: &'static str,
        expected: impl std::fmt::Display,
        found: impl std::fmt::Display,
    ) -> Self {
        SlqrError::DimensionMismatch {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
