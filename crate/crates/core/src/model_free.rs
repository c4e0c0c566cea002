//! Partially model-free learning: the drift `(A, B)` is only reachable
//! through sampled trajectories, while the diffusion matrices `(Cᵢ, Dᵢ)`
//! are known.
//!
//! Each iteration estimates the summed moment `S̃(F)` and the lag-one cross
//! moment `W(F)` of the augmented state, solves the data-driven dual
//! equation
//!
//! ```text
//! W X W' + S̃ (ΣC_F'XC_F) S̃ + S̃ (Λ - X) S̃ = 0
//! ```
//!
//! for the Q-function matrix `X`, and takes the greedy gain from it.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlqrError};
use crate::iteration::{IterationEntry, IterationLog, Stopwatch};
use crate::linalg::{matrix_serde, sym_basis, sym_coordinates, sym_from_coordinates, SymMatrix};
use crate::model::{
    augment, augmented_noise, lambda_of, AugmentedSystem, CostWeights, FeedbackGain, LambdaBlock,
    StochasticLinearSystem,
};
use crate::primal_dual::{primal_update, DualIterate};

/// State norm beyond which a trajectory counts as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;
/// Gain-norm growth factor (relative to `max(1, ‖F⁰‖)`) that aborts learning.
pub const GAIN_GROWTH_LIMIT: f64 = 1e6;
/// Largest accepted condition number of the data-driven dual system.
pub const MAX_DATA_CONDITION: f64 = 1e12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    Rademacher,
}

impl NoiseKind {
    /// Zero-mean, unit-variance draw.
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            NoiseKind::Gaussian => rng.sample(StandardNormal),
            NoiseKind::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

impl FromStr for NoiseKind {
    type Err = SlqrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseKind::Gaussian),
            "rademacher" => Ok(NoiseKind::Rademacher),
            other => Err(SlqrError::InvalidParams(format!(
                "unknown noise kind `{other}` (expected gaussian or rademacher)"
            ))),
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Rademacher => "rademacher",
        })
    }
}

/// Black-box one-step simulator `(x_k, u_k) ↦ x_{k+1}`.
pub trait Plant {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>, rng: &mut ChaCha8Rng) -> DVector<f64>;
}

/// Simulator backed by a known system. The learner sees it only through
/// [`Plant`].
#[derive(Clone, Debug)]
pub struct SimulatedPlant {
    sys: StochasticLinearSystem,
    noise: NoiseKind,
}

impl SimulatedPlant {
    pub fn new(sys: StochasticLinearSystem, noise: NoiseKind) -> Self {
        SimulatedPlant { sys, noise }
    }

    pub fn noise(&self) -> NoiseKind {
        self.noise
    }
}

impl Plant for SimulatedPlant {
    fn state_dim(&self) -> usize {
        self.sys.n()
    }

    fn input_dim(&self) -> usize {
        self.sys.m()
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let mut next = &self.sys.a * x + &self.sys.b * u;
        for (c, d) in self.sys.c.iter().zip(&self.sys.d) {
            let w = self.noise.sample(rng);
            next += (c * x + d * u) * w;
        }
        next
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the substream for one rollout.
pub fn rollout_seed(master: u64, iteration: usize, initial_index: usize, rollout_index: usize) -> u64 {
    let mut s = mix(master);
    for part in [iteration, initial_index, rollout_index] {
        s = mix(s ^ part as u64);
    }
    s
}

/// Master seed of experiment `e` in a repeated Monte-Carlo run.
pub fn experiment_seed(master: u64, experiment: usize) -> u64 {
    mix(mix(master) ^ mix(experiment as u64 ^ 0x5EED))
}

/// One trajectory `v_0, …, v_{M+1}` of the augmented state.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub v: Vec<DVector<f64>>,
    pub seed: u64,
    pub initial_index: usize,
    pub rollout_index: usize,
    /// Step and state norm at which the trajectory blew up; `v` stops there.
    pub diverged: Option<(usize, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBatch {
    pub rollouts: Vec<Rollout>,
}

/// Rolls the plant forward from `v0 = [x0; u0]`. The first input is `u0`;
/// every later input is `F x_k`.
pub fn simulate_rollout<P: Plant + ?Sized>(
    plant: &P,
    gain: &FeedbackGain,
    v0: &DVector<f64>,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Rollout> {
    let (n, m) = (plant.state_dim(), plant.input_dim());
    if gain.matrix().shape() != (m, n) {
        return Err(SlqrError::dims(
            "feedback gain",
            format!("{m}x{n}"),
            format!("{}x{}", gain.inputs(), gain.states()),
        ));
    }
    if v0.len() != n + m {
        return Err(SlqrError::dims("initial augmented state", n + m, v0.len()));
    }
    let mut v = Vec::with_capacity(horizon + 2);
    v.push(v0.clone());
    let mut x = v0.rows(0, n).into_owned();
    let mut u = v0.rows(n, m).into_owned();
    let mut diverged = None;
    for k in 1..=horizon + 1 {
        x = plant.step(&x, &u, rng);
        u = gain.matrix() * &x;
        let norm = x.norm();
        if !(norm <= DIVERGENCE_NORM) {
            diverged = Some((k, norm));
            break;
        }
        let mut vk = DVector::zeros(n + m);
        vk.rows_mut(0, n).copy_from(&x);
        vk.rows_mut(n, m).copy_from(&u);
        v.push(vk);
    }
    Ok(Rollout {
        v,
        seed: 0,
        initial_index: 0,
        rollout_index: 0,
        diverged,
    })
}

/// Truncated moment sums of the augmented state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataMatrices {
    /// `Σ_l Σ_{k≤M} E[v_k v_k']`.
    #[serde(rename = "Stil")]
    pub stil: SymMatrix,
    /// `Σ_l Σ_{k≤M} E[v_k v_{k+1}']`.
    #[serde(rename = "W", with = "matrix_serde")]
    pub w: DMatrix<f64>,
    #[serde(rename = "M")]
    pub horizon: usize,
    /// Sample paths per expectation; `None` for exact moments.
    #[serde(rename = "H")]
    pub paths: Option<usize>,
}

/// Exact moments: `V_{k+1} = A_F V_k A_F' + ΣC_F V_k C_F'`, `S̃ = Σ_{k≤M} V_k`,
/// `W = S̃ A_F'`.
pub fn propagate_second_moment(aug: &AugmentedSystem, v0: &SymMatrix, horizon: usize) -> Result<DataMatrices> {
    let d = aug.dim();
    if v0.dim() != d {
        return Err(SlqrError::dims(
            "initial moment",
            format!("{d}x{d}"),
            format!("{0}x{0}", v0.dim()),
        ));
    }
    let mut vk = v0.matrix().clone();
    let mut stil = vk.clone();
    for _ in 0..horizon {
        let mut next = &aug.a * &vk * aug.a.transpose();
        for c in &aug.c {
            next += c * &vk * c.transpose();
        }
        vk = (&next + next.transpose()) * 0.5;
        stil += &vk;
    }
    let w = &stil * aug.a.transpose();
    Ok(DataMatrices {
        stil: SymMatrix::symmetrize(stil),
        w,
        horizon,
        paths: None,
    })
}

/// Monte-Carlo moment sums. Each initial vector's contribution is the mean
/// over its rollouts; partial sums are combined in batch order.
pub fn estimate_data_matrices(batch: &RolloutBatch) -> Result<DataMatrices> {
    let first = batch.rollouts.first().ok_or(SlqrError::EmptyBatch)?;
    let d = first.v[0].len();
    let horizon = first.v.len().saturating_sub(2);
    let initials = batch.rollouts.iter().map(|r| r.initial_index).max().unwrap_or(0) + 1;
    let mut counts = vec![0usize; initials];
    let mut stil_parts = vec![DMatrix::<f64>::zeros(d, d); initials];
    let mut w_parts = vec![DMatrix::<f64>::zeros(d, d); initials];

    for r in &batch.rollouts {
        if let Some((step, norm)) = r.diverged {
            return Err(SlqrError::RolloutDiverged {
                initial_index: r.initial_index,
                rollout_index: r.rollout_index,
                step,
                norm,
            });
        }
        if r.v.len() != horizon + 2 || r.v.iter().any(|v| v.len() != d) {
            return Err(SlqrError::dims(
                "rollout length",
                format!("{} vectors of size {d}", horizon + 2),
                format!("{} vectors", r.v.len()),
            ));
        }
        let mut s = DMatrix::zeros(d, d);
        let mut w = DMatrix::zeros(d, d);
        for k in 0..=horizon {
            s.ger(1.0, &r.v[k], &r.v[k], 1.0);
            w.ger(1.0, &r.v[k], &r.v[k + 1], 1.0);
        }
        stil_parts[r.initial_index] += s;
        w_parts[r.initial_index] += w;
        counts[r.initial_index] += 1;
    }

    let mut stil = DMatrix::zeros(d, d);
    let mut w = DMatrix::zeros(d, d);
    for l in 0..initials {
        if counts[l] > 0 {
            let scale = 1.0 / counts[l] as f64;
            stil += &stil_parts[l] * scale;
            w += &w_parts[l] * scale;
        }
    }
    let paths = counts.iter().copied().filter(|&c| c > 0).min();
    Ok(DataMatrices {
        stil: SymMatrix::symmetrize(stil),
        w,
        horizon,
        paths,
    })
}

/// Solves the data-driven dual equation for symmetric `X` by least squares
/// over its upper-triangular coordinates.
pub fn solve_dual_from_data(dm: &DataMatrices, c_blocks: &[DMatrix<f64>], lam: &LambdaBlock) -> Result<DualIterate> {
    let s = dm.stil.matrix();
    let d = s.nrows();
    if dm.w.shape() != (d, d) || lam.value.dim() != d || c_blocks.iter().any(|c| c.shape() != (d, d)) {
        return Err(SlqrError::dims(
            "data-driven dual equation",
            format!("{d}x{d} blocks"),
            "mismatched block sizes",
        ));
    }
    let s_min = dm.stil.min_eigenvalue();
    if !(s_min > 0.0) {
        return Err(SlqrError::NotPositiveDefinite {
            context: "estimated S̃",
            min_eigenvalue: s_min,
        });
    }

    let operator = |x: &DMatrix<f64>| -> DMatrix<f64> {
        let mut noise = DMatrix::zeros(d, d);
        for c in c_blocks {
            noise += c.transpose() * x * c;
        }
        &dm.w * x * dm.w.transpose() + s * (noise - x) * s
    };

    let coords = sym_coordinates(d);
    let mut system = DMatrix::zeros(d * d, coords.len());
    for (j, &ij) in coords.iter().enumerate() {
        let image = operator(&sym_basis(d, ij));
        system.column_mut(j).copy_from_slice(image.as_slice());
    }
    let rhs_m = -(s * lam.value.matrix() * s);
    let rhs = DVector::from_column_slice(rhs_m.as_slice());

    let singular = system.singular_values();
    let (max_sv, min_sv) = (singular.max(), singular.min());
    let condition = if min_sv > 0.0 { max_sv / min_sv } else { f64::INFINITY };
    if !(condition <= MAX_DATA_CONDITION) {
        return Err(SlqrError::IllConditioned {
            context: "data-driven dual equation",
            condition,
        });
    }
    let qr = system.qr();
    let solution = qr
        .r()
        .solve_upper_triangular(&(qr.q().transpose() * &rhs))
        .ok_or(SlqrError::Singular {
            context: "data-driven dual equation",
        })?;
    let x = sym_from_coordinates(d, &solution);
    let residual = (operator(&x) - &rhs_m).norm();
    if !(residual <= 1e-8 * s.norm().powi(2)) {
        return Err(SlqrError::Singular {
            context: "data-driven dual equation (inconsistent data)",
        });
    }
    DualIterate::new(SymMatrix::symmetrize(x), lam.state_dim())
}

/// Standard-basis vectors `e_1..e_{n+m}`, then deterministic pseudo-random
/// unit vectors up to `r`.
pub fn generate_initial_basis(n: usize, m: usize, r: usize) -> Result<Vec<DVector<f64>>> {
    let d = n + m;
    if r < d {
        return Err(SlqrError::InsufficientInitialVectors { given: r, required: d });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x1D_17);
    let mut out: Vec<DVector<f64>> = (0..d)
        .map(|i| {
            let mut e = DVector::zeros(d);
            e[i] = 1.0;
            e
        })
        .collect();
    while out.len() < r {
        let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        if v.norm() > 1e-6 {
            out.push(v.normalize());
        }
    }
    initial_moment(&out)?;
    Ok(out)
}

/// `Ξ = Σ v_l v_l'`, required positive definite.
pub fn initial_moment(vs: &[DVector<f64>]) -> Result<SymMatrix> {
    let d = vs.first().map(|v| v.len()).ok_or(SlqrError::InsufficientInitialVectors {
        given: 0,
        required: 1,
    })?;
    let mut xi = DMatrix::zeros(d, d);
    for v in vs {
        if v.len() != d {
            return Err(SlqrError::dims("initial vector", d, v.len()));
        }
        xi.ger(1.0, v, v, 1.0);
    }
    let xi = SymMatrix::symmetrize(xi);
    let min = xi.min_eigenvalue();
    if !(min > 1e-12 * xi.max_eigenvalue().max(1.0)) {
        return Err(SlqrError::NotPositiveDefinite {
            context: "initial moment Ξ",
            min_eigenvalue: min,
        });
    }
    Ok(xi)
}

/// Learning configuration. JSON keys `M` and `H` are the horizon and the
/// number of sample paths per expectation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnConfig {
    #[serde(rename = "M")]
    pub horizon: usize,
    #[serde(rename = "H")]
    pub paths: usize,
    /// Number of initial vectors; `None` means `n + m`.
    pub r: Option<usize>,
    /// Gain-step tolerance. Zero runs exactly `max_iter` iterations.
    pub tol: f64,
    pub max_iter: usize,
    pub master_seed: u64,
    pub noise_kind: NoiseKind,
    /// Per-coordinate scale applied to the initial vectors.
    pub initial_scales: Option<Vec<f64>>,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            horizon: 50,
            paths: 200,
            r: None,
            tol: 0.0,
            max_iter: 20,
            master_seed: 0,
            noise_kind: NoiseKind::Gaussian,
            initial_scales: None,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(SlqrError::InvalidParams("H must be at least 1".into()));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(SlqrError::InvalidParams(format!("tol must be finite and nonnegative, got {}", self.tol)));
        }
        if let Some(scales) = &self.initial_scales {
            if scales.iter().any(|s| !(s.is_finite() && *s != 0.0)) {
                return Err(SlqrError::InvalidParams("initial_scales must be finite and nonzero".into()));
            }
        }
        Ok(())
    }

    /// Initial vectors for an `n`-state, `m`-input plant.
    pub fn initial_vectors(&self, n: usize, m: usize) -> Result<Vec<DVector<f64>>> {
        let mut vs = generate_initial_basis(n, m, self.r.unwrap_or(n + m))?;
        if let Some(scales) = &self.initial_scales {
            if scales.len() != n + m {
                return Err(SlqrError::dims("initial_scales", n + m, scales.len()));
            }
            let s = DVector::from_column_slice(scales);
            for v in &mut vs {
                v.component_mul_assign(&s);
            }
        }
        Ok(vs)
    }
}

/// Supplies `(S̃(F), W(F))` for the learner.
pub trait DataSource {
    fn data_matrices(&mut self, gain: &FeedbackGain, iteration: usize) -> Result<DataMatrices>;
}

/// Rollout-based estimates from a black-box plant.
pub struct SampledData<'a, P: Plant + ?Sized> {
    pub plant: &'a P,
    pub initial: Vec<DVector<f64>>,
    pub horizon: usize,
    pub paths: usize,
    pub master_seed: u64,
}

impl<P: Plant + ?Sized> SampledData<'_, P> {
    pub fn batch(&self, gain: &FeedbackGain, iteration: usize) -> Result<RolloutBatch> {
        let mut rollouts = Vec::with_capacity(self.initial.len() * self.paths);
        for (l, v0) in self.initial.iter().enumerate() {
            for h in 0..self.paths {
                let seed = rollout_seed(self.master_seed, iteration, l, h);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut r = simulate_rollout(self.plant, gain, v0, self.horizon, &mut rng)?;
                r.seed = seed;
                r.initial_index = l;
                r.rollout_index = h;
                rollouts.push(r);
            }
        }
        Ok(RolloutBatch { rollouts })
    }
}

impl<P: Plant + ?Sized> DataSource for SampledData<'_, P> {
    fn data_matrices(&mut self, gain: &FeedbackGain, iteration: usize) -> Result<DataMatrices> {
        estimate_data_matrices(&self.batch(gain, iteration)?)
    }
}

/// Exact moments from a known model; the oracle counterpart of [`SampledData`].
pub struct ExactMoments<'a> {
    pub sys: &'a StochasticLinearSystem,
    pub xi: SymMatrix,
    pub horizon: usize,
}

impl DataSource for ExactMoments<'_> {
    fn data_matrices(&mut self, gain: &FeedbackGain, _iteration: usize) -> Result<DataMatrices> {
        propagate_second_moment(&augment(self.sys, gain)?, &self.xi, self.horizon)
    }
}

/// Model-based optimum used to score learned iterates.
#[derive(Clone, Debug)]
pub struct Reference {
    pub f: FeedbackGain,
    pub x: SymMatrix,
}

#[derive(Clone, Debug)]
pub struct LearnResult {
    pub x: DualIterate,
    pub f: FeedbackGain,
    pub converged: bool,
    pub log: IterationLog,
}

/// Estimate, dual solve and primal update, repeated from `f0`.
#[allow(clippy::too_many_arguments)]
pub fn learn_with_source<S: DataSource + ?Sized>(
    source: &mut S,
    known_c: &[DMatrix<f64>],
    known_d: &[DMatrix<f64>],
    w: &CostWeights,
    f0: &FeedbackGain,
    tol: f64,
    max_iter: usize,
    reference: Option<&Reference>,
) -> Result<LearnResult> {
    if known_c.len() != known_d.len() {
        return Err(SlqrError::dims("diffusion channels", known_c.len(), known_d.len()));
    }
    let lam = lambda_of(w);
    let growth_base = f0.matrix().norm().max(1.0);
    let clock = Stopwatch::start();
    let mut log = IterationLog::default();
    let mut gain = f0.clone();
    let mut last: Option<DualIterate> = None;
    for i in 0..max_iter {
        let dm = source.data_matrices(&gain, i)?;
        let c_blocks = augmented_noise(known_c, known_d, &gain);
        let x = solve_dual_from_data(&dm, &c_blocks, &lam)?;
        let next = primal_update(&x)?;
        let gain_norm = next.matrix().norm();
        if !(gain_norm <= GAIN_GROWTH_LIMIT * growth_base) {
            return Err(SlqrError::LearningDiverged { iteration: i, gain_norm });
        }
        let step_norm = (next.matrix() - gain.matrix()).norm();
        log.entries.push(IterationEntry {
            iter: i,
            value: x.x.matrix().clone(),
            gain: gain.matrix().clone(),
            next_gain: next.matrix().clone(),
            gare_residual: f64::NAN,
            step_norm,
            wall_time_s: clock.seconds(),
            spectral_radius: None,
            monotonicity: None,
            rel_err_f: reference.map(|r| (next.matrix() - r.f.matrix()).norm() / r.f.matrix().norm()),
            rel_err_x: reference.map(|r| (x.x.matrix() - r.x.matrix()).norm() / r.x.norm()),
            stil_min_eig: Some(dm.stil.min_eigenvalue()),
        });
        gain = next;
        last = Some(x);
        if step_norm <= tol {
            log.converged = true;
            break;
        }
    }
    let x = match last {
        Some(x) => x,
        None => DualIterate::new(SymMatrix::zeros(lam.value.dim()), lam.state_dim())?,
    };
    Ok(LearnResult {
        x,
        f: gain,
        converged: log.converged,
        log,
    })
}

/// Partially model-free primal-dual learning. `plant` is the only access to
/// the drift; `known_c`, `known_d` are the diffusion matrices.
pub fn run_partially_model_free<P: Plant + ?Sized>(
    plant: &P,
    known_c: &[DMatrix<f64>],
    known_d: &[DMatrix<f64>],
    w: &CostWeights,
    f0: &FeedbackGain,
    cfg: &LearnConfig,
    reference: Option<&Reference>,
) -> Result<LearnResult> {
    cfg.validate()?;
    let (n, m) = (plant.state_dim(), plant.input_dim());
    if f0.matrix().shape() != (m, n) {
        return Err(SlqrError::dims(
            "initial gain",
            format!("{m}x{n}"),
            format!("{}x{}", f0.inputs(), f0.states()),
        ));
    }
    let mut source = SampledData {
        plant,
        initial: cfg.initial_vectors(n, m)?,
        horizon: cfg.horizon,
        paths: cfg.paths,
        master_seed: cfg.master_seed,
    };
    learn_with_source(&mut source, known_c, known_d, w, f0, cfg.tol, cfg.max_iter, reference)
}

/// Monte-Carlo estimate of `E Σ_{k≤horizon} (x_k'Qx_k + u_k'Ru_k)` from
/// `x_0 = z` under `u_k = F x_k`.
pub fn mc_cost<P: Plant + ?Sized>(
    plant: &P,
    w: &CostWeights,
    gain: &FeedbackGain,
    z: &DVector<f64>,
    horizon: usize,
    paths: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let n = plant.state_dim();
    if z.len() != n || gain.matrix().shape() != (plant.input_dim(), n) {
        return Err(SlqrError::dims("mc_cost inputs", n, z.len()));
    }
    if paths == 0 {
        return Err(SlqrError::EmptyBatch);
    }
    let (q, r) = (w.q.matrix(), w.r.matrix());
    let mut total = 0.0;
    for h in 0..paths {
        let mut x = z.clone();
        let mut path = 0.0;
        for k in 0..=horizon {
            let u = gain.matrix() * &x;
            path += x.dot(&(q * &x)) + u.dot(&(r * &u));
            if k < horizon {
                x = plant.step(&x, &u, rng);
                let norm = x.norm();
                if !(norm <= DIVERGENCE_NORM) {
                    return Err(SlqrError::RolloutDiverged {
                        initial_index: 0,
                        rollout_index: h,
                        step: k + 1,
                        norm,
                    });
                }
            }
        }
        total += path;
    }
    Ok(total / paths as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primal_dual::dual_update;
    use crate::stability::solve_gle_dual;

    fn plant2() -> (StochasticLinearSystem, CostWeights, FeedbackGain) {
        let sys = StochasticLinearSystem::single_channel(
            DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.0, 0.8]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.1]),
            DMatrix::from_row_slice(2, 1, &[0.0, 0.3]),
        )
        .unwrap();
        let w = CostWeights::new(SymMatrix::identity(2), SymMatrix::from_diagonal(&[1.0]));
        (sys, w, FeedbackGain(DMatrix::from_row_slice(1, 2, &[-0.1, -0.2])))
    }

    #[test]
    fn noise_kind_round_trip() {
        for k in [NoiseKind::Gaussian, NoiseKind::Rademacher] {
            assert_eq!(k.to_string().parse::<NoiseKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(serde_json::from_str::<NoiseKind>(&json).unwrap(), k);
        }
        assert!("uniform".parse::<NoiseKind>().is_err());
    }

    #[test]
    fn rademacher_is_pm_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws: Vec<f64> = (0..1000).map(|_| NoiseKind::Rademacher.sample(&mut rng)).collect();
        assert!(draws.iter().all(|d| d.abs() == 1.0));
        assert!(draws.iter().sum::<f64>().abs() < 100.0);
    }

    #[test]
    fn seeds_are_distinct_per_coordinate() {
        let base = rollout_seed(7, 0, 0, 0);
        assert_ne!(base, rollout_seed(7, 1, 0, 0));
        assert_ne!(base, rollout_seed(7, 0, 1, 0));
        assert_ne!(base, rollout_seed(7, 0, 0, 1));
        assert_ne!(base, rollout_seed(8, 0, 0, 0));
        assert_ne!(rollout_seed(7, 1, 0, 0), rollout_seed(7, 0, 1, 0));
        assert_eq!(base, rollout_seed(7, 0, 0, 0));
    }

    #[test]
    fn noiseless_rollout_is_matrix_power() {
        let (sys, _, f) = plant2();
        let det = sys.deterministic_part();
        let plant = SimulatedPlant::new(det.clone(), NoiseKind::Gaussian);
        let v0 = DVector::from_vec(vec![1.0, -1.0, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = simulate_rollout(&plant, &f, &v0, 4, &mut rng).unwrap();
        assert_eq!(r.v.len(), 6);
        let aug = augment(&det, &f).unwrap();
        let mut expect = v0.clone();
        for vk in &r.v {
            assert!((vk - &expect).norm() <= 1e-14);
            expect = &aug.a * expect;
        }
    }

    #[test]
    fn rollout_is_reproducible() {
        let (sys, _, f) = plant2();
        let plant = SimulatedPlant::new(sys, NoiseKind::Gaussian);
        let v0 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let a = simulate_rollout(&plant, &f, &v0, 20, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = simulate_rollout(&plant, &f, &v0, 20, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn explosion_is_flagged_and_rejected() {
        let sys = StochasticLinearSystem::scalar(10.0, 0.0, 0.0, 0.0);
        let plant = SimulatedPlant::new(sys, NoiseKind::Gaussian);
        let v0 = DVector::from_vec(vec![1.0, 0.0]);
        let r = simulate_rollout(&plant, &FeedbackGain::scalar(0.0), &v0, 30, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(r.diverged.map(|d| d.0), Some(13));
        let ok = simulate_rollout(&plant, &FeedbackGain::scalar(0.0), &v0, 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let batch = RolloutBatch { rollouts: vec![ok, r] };
        assert!(matches!(
            estimate_data_matrices(&batch),
            Err(SlqrError::RolloutDiverged { step: 13, .. })
        ));
    }

    #[test]
    fn empty_batch_is_error() {
        assert!(matches!(
            estimate_data_matrices(&RolloutBatch::default()),
            Err(SlqrError::EmptyBatch)
        ));
    }

    #[test]
    fn propagate_trivial_cases() {
        let (sys, _, f) = plant2();
        let aug = augment(&sys, &f).unwrap();
        let v0 = SymMatrix::from_diagonal(&[1.0, 2.0, 3.0]);
        let dm = propagate_second_moment(&aug, &v0, 0).unwrap();
        assert_eq!(dm.stil, v0);
        assert_eq!(dm.w, v0.matrix() * aug.a.transpose());
        let zero = propagate_second_moment(&aug, &SymMatrix::zeros(3), 10).unwrap();
        assert_eq!(zero.stil.norm() + zero.w.norm(), 0.0);
    }

    #[test]
    fn propagate_converges_to_dual_gle() {
        let (sys, _, f) = plant2();
        let aug = augment(&sys, &f).unwrap();
        let xi = SymMatrix::identity(3);
        let exact = solve_gle_dual(&aug.a, &aug.c, &xi).unwrap();
        let dm = propagate_second_moment(&aug, &xi, 400).unwrap();
        assert!((dm.stil.matrix() - exact.matrix()).norm() < 1e-12 * (1.0 + exact.norm()));
    }

    #[test]
    fn noiseless_estimate_matches_propagation() {
        let (sys, _, f) = plant2();
        let det = sys.deterministic_part();
        let plant = SimulatedPlant::new(det.clone(), NoiseKind::Gaussian);
        let source = SampledData {
            plant: &plant,
            initial: generate_initial_basis(2, 1, 3).unwrap(),
            horizon: 15,
            paths: 1,
            master_seed: 5,
        };
        let est = estimate_data_matrices(&source.batch(&f, 0).unwrap()).unwrap();
        let exact = propagate_second_moment(&augment(&det, &f).unwrap(), &SymMatrix::identity(3), 15).unwrap();
        assert!((est.stil.matrix() - exact.stil.matrix()).norm() <= 1e-12);
        assert!((&est.w - &exact.w).norm() <= 1e-12);
        assert_eq!(est.paths, Some(1));
    }

    #[test]
    fn exact_data_recovers_dual_update() {
        let (sys, w, f) = plant2();
        let aug = augment(&sys, &f).unwrap();
        for horizon in [0, 5, 50] {
            let dm = propagate_second_moment(&aug, &SymMatrix::identity(3), horizon).unwrap();
            let x = solve_dual_from_data(&dm, &aug.c, &lambda_of(&w)).unwrap();
            let oracle = dual_update(&sys, &w, &f).unwrap();
            assert!((x.x.matrix() - oracle.x.matrix()).norm() <= 1e-8 * (1.0 + oracle.x.norm()), "M={horizon}");
        }
    }

    #[test]
    fn zero_weight_data_solve_is_zero() {
        let (sys, _, f) = plant2();
        let aug = augment(&sys, &f).unwrap();
        let dm = propagate_second_moment(&aug, &SymMatrix::identity(3), 5).unwrap();
        let w = CostWeights::new(SymMatrix::zeros(2), SymMatrix::zeros(1));
        let x = solve_dual_from_data(&dm, &aug.c, &lambda_of(&w)).unwrap();
        assert!(x.x.norm() <= 1e-14);
    }

    #[test]
    fn data_solve_requires_pd_moment() {
        let (sys, w, f) = plant2();
        let aug = augment(&sys, &f).unwrap();
        let dm = propagate_second_moment(&aug, &SymMatrix::from_diagonal(&[1.0, 0.0, 0.0]), 0).unwrap();
        assert!(matches!(
            solve_dual_from_data(&dm, &aug.c, &lambda_of(&w)),
            Err(SlqrError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn initial_basis_examples() {
        let basis = generate_initial_basis(2, 1, 3).unwrap();
        assert_eq!(initial_moment(&basis).unwrap(), SymMatrix::identity(3));
        assert!(matches!(
            generate_initial_basis(2, 1, 2),
            Err(SlqrError::InsufficientInitialVectors { given: 2, required: 3 })
        ));
        let e = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(initial_moment(&[e.clone(), e.clone(), e]).is_err());
        let wide = generate_initial_basis(2, 1, 6).unwrap();
        assert_eq!(wide.len(), 6);
        assert!(initial_moment(&wide).unwrap().min_eigenvalue() > 0.0);
    }

    #[test]
    fn config_json_keys() {
        let cfg: LearnConfig = serde_json::from_str(r#"{"M": 10, "H": 15, "noise_kind": "rademacher"}"#).unwrap();
        assert_eq!((cfg.horizon, cfg.paths, cfg.noise_kind), (10, 15, NoiseKind::Rademacher));
        assert_eq!(cfg.max_iter, 20);
        assert!(serde_json::from_str::<LearnConfig>(r#"{"horizon": 10}"#).is_err());
        let bad = LearnConfig { paths: 0, ..LearnConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn exact_source_tracks_model_based() {
        let (sys, w, f) = plant2();
        let mut src = ExactMoments { sys: &sys, xi: SymMatrix::identity(3), horizon: 5 };
        let learned = learn_with_source(&mut src, &sys.c, &sys.d, &w, &f, 1e-11, 30, None).unwrap();
        let pd = crate::primal_dual::run_model_based(&sys, &w, &f, 1e-11, 30).unwrap();
        assert!(learned.converged);
        assert_eq!(learned.log.len(), pd.log.len());
        for (a, b) in learned.log.entries.iter().zip(&pd.log.entries) {
            assert!((&a.value - &b.value).norm() <= 1e-8 * (1.0 + b.value.norm()));
            assert!((&a.next_gain - &b.next_gain).norm() <= 1e-8);
        }
    }

    #[test]
    fn mc_cost_trivial_cases() {
        let sys = StochasticLinearSystem::scalar(0.5, 1.0, 0.0, 0.0);
        let plant = SimulatedPlant::new(sys, NoiseKind::Gaussian);
        let w = CostWeights::scalar(1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = FeedbackGain::scalar(0.0);
        let c = mc_cost(&plant, &w, &f, &DVector::from_vec(vec![2.0]), 60, 3, &mut rng).unwrap();
        let series = 4.0 * (1.0 - 0.25f64.powi(61)) / 0.75;
        assert!((c - series).abs() <= 1e-12);
        assert_eq!(mc_cost(&plant, &w, &f, &DVector::from_vec(vec![0.0]), 60, 3, &mut rng).unwrap(), 0.0);
    }
}
