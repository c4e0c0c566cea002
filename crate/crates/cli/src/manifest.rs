use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use slqr::arm::ArmParams;
use slqr::io::SystemDocument;
use slqr::{FeedbackGain, LearnConfig};

pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub system: SystemDocument,
    pub f0: FeedbackGain,
    pub tol: f64,
    pub max_iter: usize,
    pub record_timing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnRun {
    pub system: SystemDocument,
    pub f0: FeedbackGain,
    pub learn: LearnConfig,
    pub experiments: usize,
    pub record_timing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmRun {
    pub params: ArmParams,
    /// User-supplied initial gain; `None` selects the default.
    pub f0: Option<FeedbackGain>,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    pub learn: LearnConfig,
    pub experiments: usize,
    pub no_learn: bool,
    pub record_timing: bool,
}

/// Fully resolved inputs of one invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Resolved {
    Solve(SolveConfig),
    Pd(SolveConfig),
    Learn(LearnRun),
    Arm(ArmRun),
}

impl Resolved {
    pub fn name(&self) -> &'static str {
        match self {
            Resolved::Solve(_) => "solve",
            Resolved::Pd(_) => "pd",
            Resolved::Learn(_) => "learn",
            Resolved::Arm(_) => "arm",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Versions {
    pub slqr: String,
    pub slqr_cli: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Resolved,
    /// Master seed of each learning experiment, in order.
    pub seeds: Vec<u64>,
    pub versions: Versions,
    /// Artifacts written, relative to the output directory.
    pub outputs: Vec<String>,
    pub exit_code: i32,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

pub fn versions() -> Versions {
    Versions {
        slqr: slqr::VERSION.to_string(),
        slqr_cli: env!("CARGO_PKG_VERSION").to_string(),
    }
}

pub fn load(path: &Path) -> anyhow::Result<RunManifest> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
