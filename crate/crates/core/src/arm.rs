//! Planar arm reaching benchmark: point-mass hand with first-order muscle
//! dynamics and control-dependent noise, Euler-discretized.
//!
//! State `x = [p; v; a]` (position, velocity, actuator force, two axes each),
//! input `u` the two motor commands.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlqrError};
use crate::linalg::SymMatrix;
use crate::model::{close_loop, CostWeights, FeedbackGain, StochasticLinearSystem};
use crate::riccati::policy_improve;
use crate::stability::is_asms;

/// Force-field pattern added to the velocity dynamics, scaled by `χ/m`.
pub const FORCE_FIELD: [[f64; 2]; 2] = [[13.0, -18.0], [18.0, 13.0]];

/// Published stabilizing gain for the benchmark (row-major, 2×6).
pub const PUBLISHED_INITIAL_GAIN: [[f64; 6]; 2] = [
    [-0.0273, -0.0258, 23.4596, 5.7615, 0.2648, -1.2886],
    [0.0238, 0.0055, -13.8178, 12.2552, 0.5310, 0.8847],
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmParams {
    /// Mass (kg).
    pub m: f64,
    /// Damping (N·s/m).
    pub b: f64,
    /// Actuator time constant (s).
    pub tau: f64,
    pub d1: f64,
    pub d2: f64,
    /// Force-field strength, in `[2/3, 1]` when the field is on.
    pub chi: f64,
    /// Discretization step (s).
    pub dt: f64,
    pub include_force_field: bool,
}

impl Default for ArmParams {
    fn default() -> Self {
        ArmParams {
            m: 1.3,
            b: 10.0,
            tau: 0.05,
            d1: 0.15,
            d2: 0.05,
            chi: 2.0 / 3.0,
            dt: 0.1,
            include_force_field: false,
        }
    }
}

impl ArmParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [("m", self.m), ("b", self.b), ("tau", self.tau), ("dt", self.dt)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SlqrError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.d1.is_finite() && self.d2.is_finite()) {
            return Err(SlqrError::InvalidParams("noise gains must be finite".into()));
        }
        if self.include_force_field && !(2.0 / 3.0 - 1e-12..=1.0).contains(&self.chi) {
            return Err(SlqrError::InvalidParams(format!(
                "chi must lie in [2/3, 1] with the force field on, got {}",
                self.chi
            )));
        }
        Ok(())
    }
}

fn put(target: &mut DMatrix<f64>, row: usize, col: usize, block: &DMatrix<f64>) {
    target.view_mut((row, col), block.shape()).copy_from(block);
}

/// Continuous-time generator `(A_c, B_c)`.
pub fn continuous_dynamics(p: &ArmParams) -> (DMatrix<f64>, DMatrix<f64>) {
    let i2 = DMatrix::<f64>::identity(2, 2);
    let mut vv = &i2 * (-p.b / p.m);
    if p.include_force_field {
        let ff = DMatrix::from_fn(2, 2, |r, c| FORCE_FIELD[r][c]);
        vv += ff * (p.chi / p.m);
    }
    let mut a = DMatrix::zeros(6, 6);
    put(&mut a, 0, 2, &i2);
    put(&mut a, 2, 2, &vv);
    put(&mut a, 2, 4, &(&i2 / p.m));
    put(&mut a, 4, 4, &(&i2 * (-1.0 / p.tau)));
    let mut b = DMatrix::zeros(6, 2);
    put(&mut b, 4, 0, &(&i2 / p.tau));
    (a, b)
}

/// Discrete benchmark model and its cost weights.
///
/// `A = I + Δt·A_c`, `B = Δt·B_c`, `Cᵢ = 0`, and the noise gains enter the
/// actuator rows as `√Δt·[d1 0; d2 0]` and `√Δt·[0 -d2; 0 d1]`.
pub fn build_arm_model(p: &ArmParams) -> Result<(StochasticLinearSystem, CostWeights)> {
    p.validate()?;
    let (ac, bc) = continuous_dynamics(p);
    let a = DMatrix::identity(6, 6) + ac * p.dt;
    let b = bc * p.dt;
    let sq = p.dt.sqrt();
    let noise = |pattern: [f64; 4]| {
        let mut d = DMatrix::zeros(6, 2);
        put(&mut d, 4, 0, &(DMatrix::from_row_slice(2, 2, &pattern) * sq));
        d
    };
    let d = vec![noise([p.d1, 0.0, p.d2, 0.0]), noise([0.0, -p.d2, 0.0, p.d1])];
    let c = vec![DMatrix::zeros(6, 6), DMatrix::zeros(6, 6)];
    let sys = StochasticLinearSystem::new(a, b, c, d)?;

    let mut q = DMatrix::zeros(6, 6);
    put(&mut q, 0, 0, &DMatrix::from_row_slice(2, 2, &[2000.0, -40.0, -40.0, 1000.0]));
    put(&mut q, 2, 2, &DMatrix::from_row_slice(2, 2, &[20.0, -1.0, -1.0, 20.0]));
    put(&mut q, 4, 4, &DMatrix::from_diagonal_element(2, 2, 0.01));
    let w = CostWeights::new(SymMatrix::new(q)?, SymMatrix::from_diagonal(&[0.01, 0.01]));
    Ok((sys, w))
}

pub fn published_initial_gain() -> FeedbackGain {
    FeedbackGain(DMatrix::from_fn(2, 6, |r, c| PUBLISHED_INITIAL_GAIN[r][c]))
}

/// A stabilizing gain for a plant without a known one: the greedy gain of
/// Riccati value iteration on unit weights `Q = I`, `R = I`, started from
/// `P = 0`. Returns `None` if no iterate within `max_iter` is stabilizing.
pub fn synthesize_stabilizing_gain(sys: &StochasticLinearSystem, max_iter: usize) -> Result<Option<FeedbackGain>> {
    let w = CostWeights::new(SymMatrix::identity(sys.n()), SymMatrix::identity(sys.m()));
    let mut p = SymMatrix::zeros(sys.n());
    for _ in 0..max_iter {
        let f = policy_improve(sys, &w, &p)?;
        let cl = close_loop(sys, &f)?;
        let mut next = w.q.matrix() + f.matrix().transpose() * w.r.matrix() * f.matrix() + cl.a.transpose() * p.matrix() * &cl.a;
        for c in &cl.c {
            next += c.transpose() * p.matrix() * c;
        }
        let next = SymMatrix::symmetrize(next);
        let step = (next.matrix() - p.matrix()).norm();
        p = next;
        if step <= 1e-10 * (1.0 + p.norm()) {
            break;
        }
        if !p.iter().all(|v| v.is_finite()) {
            return Ok(None);
        }
    }
    let f = policy_improve(sys, &w, &p)?;
    let cl = close_loop(sys, &f)?;
    Ok(is_asms(&cl.a, &cl.c)?.asms.then_some(f))
}
