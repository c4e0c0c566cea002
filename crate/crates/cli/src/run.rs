use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use slqr::arm::{build_arm_model, published_initial_gain, synthesize_stabilizing_gain};
use slqr::io::{gain_from_json, gain_to_json, load_gain, to_json, SystemDocument};
use slqr::model_free::{experiment_seed, learn_with_source, Reference, SampledData};
use slqr::primal_dual::{certify, run_model_based};
use slqr::report::{emit_convergence_report, mean_rel_err_f};
use slqr::{
    close_loop, is_asms, solve_gare_pi, CostWeights, FeedbackGain, IterationLog, LearnConfig,
    SimulatedPlant, SlqrError, StochasticLinearSystem, SymMatrix,
};

use crate::cli::{ArmArgs, LearnArgs, LearnFlags, SolveArgs};
use crate::manifest::{self, ArmRun, LearnRun, Resolved, RunManifest, SolveConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl Failure {
    pub fn invalid(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }
}

impl From<SlqrError> for Failure {
    fn from(e: SlqrError) -> Self {
        let code = match e {
            SlqrError::DimensionMismatch { .. }
            | SlqrError::Asymmetric { .. }
            | SlqrError::NonFinite { .. }
            | SlqrError::NotAsms { .. }
            | SlqrError::NotStabilizing { .. }
            | SlqrError::InvalidSystem(_)
            | SlqrError::InsufficientInitialVectors { .. }
            | SlqrError::InvalidParams(_)
            | SlqrError::Io(_)
            | SlqrError::Json(_) => EXIT_INVALID,
            _ => EXIT_NOT_CONVERGED,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::invalid(e.to_string())
    }
}

type Outcome = Result<Artifacts, Failure>;

/// Files written plus the exit code they were written under.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<String>,
    pub seeds: Vec<u64>,
    pub code: i32,
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::invalid(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Writer { dir, files: Vec::new() })
    }

    fn text(&mut self, name: &str, body: impl AsRef<[u8]>) -> Result<(), Failure> {
        fs::write(self.dir.join(name), body)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        self.text(name, to_json(value)?)
    }

    fn solver_csv(&mut self, name: &str, log: &IterationLog, timing: bool) -> Result<(), Failure> {
        let mut buf = Vec::new();
        log.write_solver_csv(&mut buf, timing)?;
        self.text(name, buf)
    }

    fn adopt(&mut self, paths: &[PathBuf]) {
        for p in paths {
            if let Some(name) = p.strip_prefix(self.dir).ok().and_then(|r| r.to_str()) {
                self.files.push(name.to_string());
            }
        }
    }
}

fn read_text(path: &Path, what: &str) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::invalid(format!("cannot read {what} {}: {e}", path.display())))
}

fn parse_f0(value: Option<&str>) -> Result<FeedbackGain, Failure> {
    let value = value.ok_or_else(|| Failure::invalid("missing initial gain: pass --f0 <file or inline JSON>"))?;
    let trimmed = value.trim_start();
    let parsed = if trimmed.starts_with('[') || trimmed.starts_with('{') {
        gain_from_json(value)
    } else {
        load_gain(Path::new(value))
    };
    parsed.map_err(|e| Failure::invalid(format!("invalid --f0: {e}")))
}

fn load_system(path: &Path) -> Result<SystemDocument, Failure> {
    let text = read_text(path, "system")?;
    SystemDocument::from_json(&text).map_err(|e| Failure::invalid(format!("invalid system {}: {e}", path.display())))
}

fn model(doc: &SystemDocument) -> Result<(StochasticLinearSystem, CostWeights), Failure> {
    Ok(doc.clone().into_model()?)
}

/// Rejects a non-stabilizing initial gain up front, reporting its radius.
fn check_stabilizing(sys: &StochasticLinearSystem, f0: &FeedbackGain) -> Result<f64, Failure> {
    let cl = close_loop(sys, f0)?;
    let report = is_asms(&cl.a, &cl.c)?;
    if !report.asms {
        return Err(SlqrError::NotStabilizing {
            spectral_radius: report.spectral_radius,
        }
        .into());
    }
    Ok(report.spectral_radius)
}

pub fn resolve_solve(args: &SolveArgs, pd: bool) -> Result<Resolved, Failure> {
    let cfg = SolveConfig {
        system: load_system(&args.input)?,
        f0: parse_f0(args.f0.as_deref())?,
        tol: args.tol,
        max_iter: args.max_iter,
        record_timing: args.common.record_timing,
    };
    Ok(if pd { Resolved::Pd(cfg) } else { Resolved::Solve(cfg) })
}

pub fn resolve_learn_config(flags: &LearnFlags) -> Result<LearnConfig, Failure> {
    let mut cfg = match &flags.config {
        Some(path) => serde_json::from_str(&read_text(path, "learning config")?)
            .map_err(|e| Failure::invalid(format!("invalid learning config {}: {e}", path.display())))?,
        None => LearnConfig::default(),
    };
    if let Some(v) = flags.seed {
        cfg.master_seed = v;
    }
    if let Some(v) = flags.horizon {
        cfg.horizon = v;
    }
    if let Some(v) = flags.paths {
        cfg.paths = v;
    }
    if let Some(v) = flags.noise {
        cfg.noise_kind = v;
    }
    if let Some(v) = flags.tol {
        cfg.tol = v;
    }
    if let Some(v) = flags.max_iter {
        cfg.max_iter = v;
    }
    cfg.validate()?;
    if flags.experiments == 0 {
        return Err(Failure::invalid("--experiments must be at least 1"));
    }
    Ok(cfg)
}

pub fn resolve_learn(args: &LearnArgs) -> Result<Resolved, Failure> {
    Ok(Resolved::Learn(LearnRun {
        system: load_system(&args.input)?,
        f0: parse_f0(args.f0.as_deref())?,
        learn: resolve_learn_config(&args.learn)?,
        experiments: args.learn.experiments,
        record_timing: args.common.record_timing,
    }))
}

pub fn resolve_arm(args: &ArmArgs) -> Result<Resolved, Failure> {
    let params = match &args.params {
        Some(path) => serde_json::from_str(&read_text(path, "arm parameters")?)
            .map_err(|e| Failure::invalid(format!("invalid arm parameters {}: {e}", path.display())))?,
        None => Default::default(),
    };
    let f0 = match &args.f0 {
        Some(v) => Some(parse_f0(Some(v))?),
        None => None,
    };
    Ok(Resolved::Arm(ArmRun {
        params,
        f0,
        solver_tol: args.solver_tol,
        solver_max_iter: args.solver_max_iter,
        learn: resolve_learn_config(&args.learn)?,
        experiments: args.learn.experiments,
        no_learn: args.no_learn,
        record_timing: args.common.record_timing,
    }))
}

/// Executes a resolved invocation and writes its manifest.
pub fn execute(resolved: &Resolved, out: &Path) -> Result<i32, Failure> {
    let started = manifest::now_ms();
    let result = match resolved {
        Resolved::Solve(cfg) => solve(cfg, out),
        Resolved::Pd(cfg) => pd(cfg, out),
        Resolved::Learn(cfg) => learn(cfg, out),
        Resolved::Arm(cfg) => arm(cfg, out),
    };
    let (mut artifacts, failure) = match result {
        Ok(a) => (a, None),
        Err(f) => (
            Artifacts {
                code: f.code,
                ..Artifacts::default()
            },
            Some(f),
        ),
    };
    artifacts.files.push(manifest::MANIFEST_FILE.to_string());
    let record = RunManifest {
        command: resolved.name().to_string(),
        config: resolved.clone(),
        seeds: artifacts.seeds.clone(),
        versions: manifest::versions(),
        outputs: artifacts.files.clone(),
        exit_code: artifacts.code,
        started_unix_ms: started,
        finished_unix_ms: manifest::now_ms(),
    };
    if fs::create_dir_all(out).is_ok() {
        fs::write(out.join(manifest::MANIFEST_FILE), to_json(&record)?)?;
    }
    match failure {
        Some(f) => Err(f),
        None => Ok(artifacts.code),
    }
}

#[derive(Serialize)]
struct SolutionOut<'a> {
    #[serde(rename = "P")]
    p: &'a SymMatrix,
    #[serde(rename = "F")]
    f: &'a FeedbackGain,
    #[serde(rename = "X")]
    x: &'a SymMatrix,
    converged: bool,
    iterations: usize,
    gare_residual: f64,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    warnings: &'a [String],
}

fn converged_code(converged: bool) -> i32 {
    if converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    }
}

fn solve(cfg: &SolveConfig, out: &Path) -> Outcome {
    let (sys, w) = model(&cfg.system)?;
    check_stabilizing(&sys, &cfg.f0)?;
    let sol = solve_gare_pi(&sys, &w, &cfg.f0, cfg.tol, cfg.max_iter)?;
    for warning in &sol.warnings {
        eprintln!("warning: {warning}");
    }
    let mut wr = Writer::new(out)?;
    wr.json(
        "solution.json",
        &SolutionOut {
            p: &sol.p,
            f: &sol.f,
            x: &sol.x,
            converged: sol.converged,
            iterations: sol.iterations,
            gare_residual: sol.gare_residual,
            warnings: &sol.warnings,
        },
    )?;
    wr.solver_csv("iterations.csv", &sol.log, cfg.record_timing)?;
    Ok(Artifacts {
        files: wr.files,
        seeds: Vec::new(),
        code: converged_code(sol.converged),
    })
}

fn pd(cfg: &SolveConfig, out: &Path) -> Outcome {
    let (sys, w) = model(&cfg.system)?;
    check_stabilizing(&sys, &cfg.f0)?;
    let sol = run_model_based(&sys, &w, &cfg.f0, cfg.tol, cfg.max_iter)?;
    let xi = SymMatrix::identity(sys.n() + sys.m());
    let cert = certify(&sys, &w, &sol.f, &xi)?;
    let mut wr = Writer::new(out)?;
    wr.json(
        "solution.json",
        &SolutionOut {
            p: &sol.p,
            f: &sol.f,
            x: &sol.x.x,
            converged: sol.converged,
            iterations: sol.log.len(),
            gare_residual: slqr::gare_residual(&sys, &w, &sol.p)?.matrix().norm(),
            warnings: &[],
        },
    )?;
    wr.solver_csv("iterations.csv", &sol.log, cfg.record_timing)?;
    wr.json("kkt.json", &cert)?;
    Ok(Artifacts {
        files: wr.files,
        seeds: Vec::new(),
        code: converged_code(sol.converged),
    })
}

fn seeds_for(cfg: &LearnConfig, experiments: usize) -> Vec<u64> {
    (0..experiments)
        .map(|e| if e == 0 { cfg.master_seed } else { experiment_seed(cfg.master_seed, e) })
        .collect()
}

struct LearnOutcome {
    logs: Vec<IterationLog>,
    finals: Vec<FeedbackGain>,
    seeds: Vec<u64>,
    all_converged: bool,
}

fn learn_experiments(
    sys: &StochasticLinearSystem,
    w: &CostWeights,
    f0: &FeedbackGain,
    cfg: &LearnConfig,
    experiments: usize,
    reference: Option<&Reference>,
) -> Result<LearnOutcome, Failure> {
    let plant = SimulatedPlant::new(sys.clone(), cfg.noise_kind);
    let seeds = seeds_for(cfg, experiments);
    let initial = cfg.initial_vectors(sys.n(), sys.m())?;
    let mut logs = Vec::with_capacity(experiments);
    let mut finals = Vec::with_capacity(experiments);
    let mut all_converged = true;
    for &seed in &seeds {
        let mut source = SampledData {
            plant: &plant,
            initial: initial.clone(),
            horizon: cfg.horizon,
            paths: cfg.paths,
            master_seed: seed,
        };
        let res = learn_with_source(&mut source, &sys.c, &sys.d, w, f0, cfg.tol, cfg.max_iter, reference)?;
        all_converged &= res.converged || cfg.tol == 0.0;
        logs.push(res.log);
        finals.push(res.f);
    }
    Ok(LearnOutcome {
        logs,
        finals,
        seeds,
        all_converged,
    })
}

/// Model-based optimum for scoring; `None` if it cannot be computed.
fn reference_for(sys: &StochasticLinearSystem, w: &CostWeights, f0: &FeedbackGain) -> Option<Reference> {
    let sol = solve_gare_pi(sys, w, f0, slqr::riccati::DEFAULT_TOLERANCE, slqr::riccati::DEFAULT_MAX_ITER).ok()?;
    sol.converged.then_some(Reference { f: sol.f, x: sol.x })
}

fn write_learning(wr: &mut Writer<'_>, outcome: &LearnOutcome, reference: Option<&Reference>, timing: bool) -> Result<(), Failure> {
    let files = emit_convergence_report(&outcome.logs, reference.map(|r| &r.f), wr.dir, timing)?;
    wr.adopt(&files.csv);
    wr.adopt(&files.svg);
    if let Some(f) = outcome.finals.first() {
        wr.text("gain_final.json", gain_to_json(f)?)?;
    }
    Ok(())
}

fn learn(cfg: &LearnRun, out: &Path) -> Outcome {
    let (sys, w) = model(&cfg.system)?;
    check_stabilizing(&sys, &cfg.f0)?;
    let reference = reference_for(&sys, &w, &cfg.f0);
    let outcome = learn_experiments(&sys, &w, &cfg.f0, &cfg.learn, cfg.experiments, reference.as_ref())?;
    let mut wr = Writer::new(out)?;
    write_learning(&mut wr, &outcome, reference.as_ref(), cfg.record_timing)?;
    Ok(Artifacts {
        files: wr.files,
        seeds: outcome.seeds,
        code: converged_code(outcome.all_converged),
    })
}

#[derive(Serialize)]
struct ArmComparison {
    f0_source: &'static str,
    f0_spectral_radius: f64,
    published_gain_spectral_radius: f64,
    pi_converged: bool,
    pi_iterations: usize,
    pd_converged: bool,
    pd_iterations: usize,
    /// `‖F_pd - F_pi‖`.
    pi_pd_gain_difference: f64,
    /// `‖P_pd - P_pi‖`.
    pi_pd_value_difference: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    learned: Option<LearnedSummary>,
}

#[derive(Serialize)]
struct LearnedSummary {
    experiments: usize,
    final_rel_err_f: Vec<f64>,
    mean_rel_err_f: Vec<f64>,
}

fn arm(cfg: &ArmRun, out: &Path) -> Outcome {
    let (sys, w) = build_arm_model(&cfg.params)?;
    let published = published_initial_gain();
    let cl = close_loop(&sys, &published)?;
    let published_radius = is_asms(&cl.a, &cl.c)?.spectral_radius;
    let (f0, source) = match &cfg.f0 {
        Some(f) => (f.clone(), "user"),
        None if published_radius < 1.0 => (published, "published"),
        None => {
            let f = synthesize_stabilizing_gain(&sys, 10_000)?
                .ok_or_else(|| Failure::invalid("no stabilizing initial gain found; pass --f0"))?;
            eprintln!(
                "note: published initial gain does not stabilize this model (radius {published_radius:.4}); using a synthesized gain"
            );
            (f, "synthesized")
        }
    };
    let f0_radius = check_stabilizing(&sys, &f0)?;

    let mut wr = Writer::new(out)?;
    wr.json("system.json", &SystemDocument::from_model(&sys, &w, Some("arm".into())))?;
    wr.text("gain_initial.json", gain_to_json(&f0)?)?;

    let pi = solve_gare_pi(&sys, &w, &f0, cfg.solver_tol, cfg.solver_max_iter)?;
    wr.json(
        "solution_pi.json",
        &SolutionOut {
            p: &pi.p,
            f: &pi.f,
            x: &pi.x,
            converged: pi.converged,
            iterations: pi.iterations,
            gare_residual: pi.gare_residual,
            warnings: &pi.warnings,
        },
    )?;
    wr.solver_csv("iterations_pi.csv", &pi.log, cfg.record_timing)?;

    let pd = run_model_based(&sys, &w, &f0, cfg.solver_tol, cfg.solver_max_iter)?;
    wr.json(
        "solution_pd.json",
        &SolutionOut {
            p: &pd.p,
            f: &pd.f,
            x: &pd.x.x,
            converged: pd.converged,
            iterations: pd.log.len(),
            gare_residual: slqr::gare_residual(&sys, &w, &pd.p)?.matrix().norm(),
            warnings: &[],
        },
    )?;
    wr.solver_csv("iterations_pd.csv", &pd.log, cfg.record_timing)?;
    let cert = certify(&sys, &w, &pd.f, &SymMatrix::identity(sys.n() + sys.m()))?;
    wr.json("kkt.json", &cert)?;

    let mut seeds = Vec::new();
    let mut learned = None;
    let mut learn_ok = true;
    if !cfg.no_learn {
        let reference = Reference {
            f: pi.f.clone(),
            x: pi.x.clone(),
        };
        let outcome = learn_experiments(&sys, &w, &f0, &cfg.learn, cfg.experiments, Some(&reference))?;
        write_learning(&mut wr, &outcome, Some(&reference), cfg.record_timing)?;
        learned = Some(LearnedSummary {
            experiments: cfg.experiments,
            final_rel_err_f: outcome
                .logs
                .iter()
                .filter_map(|l| l.last().and_then(|e| e.rel_err_f))
                .collect(),
            mean_rel_err_f: mean_rel_err_f(&outcome.logs),
        });
        learn_ok = outcome.all_converged;
        seeds = outcome.seeds;
    }

    wr.json(
        "comparison.json",
        &ArmComparison {
            f0_source: source,
            f0_spectral_radius: f0_radius,
            published_gain_spectral_radius: published_radius,
            pi_converged: pi.converged,
            pi_iterations: pi.iterations,
            pd_converged: pd.converged,
            pd_iterations: pd.log.len(),
            pi_pd_gain_difference: (pd.f.matrix() - pi.f.matrix()).norm(),
            pi_pd_value_difference: (pd.p.matrix() - pi.p.matrix()).norm(),
            learned,
        },
    )?;
    Ok(Artifacts {
        files: wr.files,
        seeds,
        code: converged_code(pi.converged && pd.converged && learn_ok),
    })
}
