//! Stochastic linear-quadratic regulation with multiplicative noise:
//! generalized Riccati solvers, a primal-dual view of policy iteration, and
//! a partially model-free learner that needs only the diffusion matrices.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod arm;
pub mod error;
pub mod io;
pub mod iteration;
pub mod linalg;
pub mod model;
pub mod model_free;
pub mod primal_dual;
pub mod report;
pub mod riccati;
pub mod stability;

pub use error::{Result, SlqrError};
pub use iteration::{IterationEntry, IterationLog};
pub use linalg::SymMatrix;
pub use model::{
    augment, close_loop, lambda_of, validate_system, AugmentedSystem, ClosedLoop, CostWeights,
    FeedbackGain, LambdaBlock, StochasticLinearSystem, ValidationReport,
};
pub use model_free::{
    run_partially_model_free, LearnConfig, NoiseKind, Plant, Reference, SimulatedPlant,
};
pub use primal_dual::{
    dual_update, duality_gap, kkt_residuals, primal_update, run_model_based, DualIterate,
    KKTReport, PrimalDualSolution, PrimalIterate,
};
pub use riccati::{
    gare_residual, optimal_qfunction, policy_evaluate, policy_improve, solve_gare_pi, value_of,
    GareSolution,
};
pub use stability::{
    is_asms, pbh_exact_detectability, pbh_exact_observability, solve_gle_dual, solve_gle_primal,
    spectrum, SpectrumReport,
};
