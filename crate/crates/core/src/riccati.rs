//! Generalized algebraic Riccati equation (GARE) by off-line policy
//! iteration, plus the Q-function matrix and value helpers.
//!
//! The GARE is
//!
//! ```text
//! A'PA + ΣC'PC + Q - (A'PB + ΣC'PD)(R + B'PB + ΣD'PD)⁻¹(B'PA + ΣD'PC) = P
//! ```
//!
//! Policy iteration alternates a generalized Lyapunov solve for the cost of
//! the current gain with the greedy gain update. Starting from a stabilizing
//! gain, the value matrices decrease monotonically to `P*` and every gain on
//! the way is stabilizing.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Result, SlqrError};
use crate::iteration::{IterationEntry, IterationLog, Stopwatch};
use crate::linalg::SymMatrix;
use crate::model::{close_loop, ensure_valid, CostWeights, FeedbackGain, StochasticLinearSystem};
use crate::stability::{is_asms, pbh_exact_detectability, solve_gle_primal, DEFAULT_PBH_TOLERANCE};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 100;

/// Result of [`solve_gare_pi`].
#[derive(Clone, Debug, Serialize)]
pub struct GareSolution {
    #[serde(rename = "P")]
    pub p: SymMatrix,
    #[serde(rename = "F")]
    pub f: FeedbackGain,
    #[serde(rename = "X")]
    pub x: SymMatrix,
    pub converged: bool,
    pub iterations: usize,
    pub gare_residual: f64,
    #[serde(skip)]
    pub log: IterationLog,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// `R + B'PB + ΣD'PD` and `B'PA + ΣD'PC`.
fn gain_blocks(
    sys: &StochasticLinearSystem,
    w: &CostWeights,
    p: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut h = w.r.matrix() + sys.b.transpose() * p * &sys.b;
    let mut g = sys.b.transpose() * p * &sys.a;
    for (c, d) in sys.c.iter().zip(&sys.d) {
        h += d.transpose() * p * d;
        g += d.transpose() * p * c;
    }
    (h, g)
}

fn solve_inner(h: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (h + h.transpose()) * 0.5;
    if let Some(chol) = sym.clone().cholesky() {
        return Ok(chol.solve(rhs));
    }
    sym.lu()
        .solve(rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or(SlqrError::Singular {
            context: "R + B'PB + ΣD'PD",
        })
}

fn check_value_shape(sys: &StochasticLinearSystem, p: &SymMatrix) -> Result<()> {
    if p.dim() != sys.n() {
        return Err(SlqrError::dims(
            "value matrix",
            format!("{0}x{0}", sys.n()),
            format!("{0}x{0}", p.dim()),
        ));
    }
    Ok(())
}

/// Cost matrix of a stabilizing gain: the solution of
/// `(A+BF)'P(A+BF) + Σ(C_i+D_iF)'P(C_i+D_iF) + Q + F'RF = P`.
pub fn policy_evaluate(
    sys: &StochasticLinearSystem,
    w: &CostWeights,
    gain: &FeedbackGain,
) -> Result<SymMatrix> {
    ensure_valid(sys, w)?;
    let cl = close_loop(sys, gain)?;
    let spectrum = is_asms(&cl.a, &cl.c)?;
    if !spectrum.asms {
        return Err(SlqrError::NotStabilizing {
            spectral_radius: spectrum.spectral_radius,
        });
    }
    let f = gain.matrix();
    let forcing = SymMatrix::symmetrize(w.q.matrix() + f.transpose() * w.r.matrix() * f);
    solve_gle_primal(&cl.a, &cl.c, &forcing)
}

/// Greedy gain `F = -(R + B'PB + ΣD'PD)⁻¹(B'PA + ΣD'PC)`.
pub fn policy_improve(
    sys: &StochasticLinearSystem,
    w: &CostWeights,
    p: &SymMatrix,
) -> Result<FeedbackGain> {
    check_value_shape(sys, p)?;
    let (h, g) = gain_blocks(sys, w, p.matrix());
    Ok(FeedbackGain(-solve_inner(&h, &g)?))
}

/// Left side minus right side of the GARE at `P`.
pub fn gare_residual(
    sys: &StochasticLinearSystem,
    w: &CostWeights,
    p: &SymMatrix,
) -> Result<SymMatrix> {
    check_value_shape(sys, p)?;
    let pm = p.matrix();
    let (h, g) = gain_blocks(sys, w, pm);
    let mut lhs = w.q.matrix() + sys.a.transpose() * pm * &sys.a;
    for c in &sys.c {
        lhs += c.transpose() * pm * c;
    }
    let correction = g.transpose() * solve_inner(&h, &g)?;
    Ok(SymMatrix::symmetrize(lhs - correction - pm))
}

/// Q-function matrix
/// `X = [Q + A'PA + ΣC'PC, A'PB + ΣC'PD; ·, R + B'PB + ΣD'PD]`.
pub fn optimal_qfunction(
    sys: &StochasticLinearSystem,
    w: &CostWeights,
    p: &SymMatrix,
) -> Result<SymMatrix> {
    check_value_shape(sys, p)?;
    let (n, m) = (sys.n(), sys.m());
    let pm = p.matrix();
    let (x22, x21) = gain_blocks(sys, w, pm);
    let mut x11 = w.q.matrix() + sys.a.transpose() * pm * &sys.a;
    for c in &sys.c {
        x11 += c.transpose() * pm * c;
    }
    let mut x = DMatrix::zeros(n + m, n + m);
    x.view_mut((0, 0), (n, n)).copy_from(&x11);
    x.view_mut((0, n), (n, m)).copy_from(&x21.transpose());
    x.view_mut((n, 0), (m, n)).copy_from(&x21);
    x.view_mut((n, n), (m, m)).copy_from(&x22);
    Ok(SymMatrix::symmetrize(x))
}

/// `Tr(Z P)`: the summed cost over initial states `z_l` with `Z = Σ z_l z_l'`.
pub fn value_of(p: &SymMatrix, z: &SymMatrix) -> Result<f64> {
    if p.dim() != z.dim() {
        return Err(SlqrError::dims(
            "value_of",
            format!("{0}x{0}", p.dim()),
            format!("{0}x{0}", z.dim()),
        ));
    }
    Ok(z.trace_product(p.matrix()))
}

/// Policy iteration from a user-supplied stabilizing gain.
///
/// Stops once `‖F^(i+1) - F^(i)‖ ≤ tol`. Hitting `max_iter` is not an error:
/// the returned solution has `converged == false` and carries the full log.
/// A failed exact-detectability test is reported in `warnings` only.
pub fn solve_gare_pi(
    sys: &StochasticLinearSystem,
    w: &CostWeights,
    f0: &FeedbackGain,
    tol: f64,
    max_iter: usize,
) -> Result<GareSolution> {
    ensure_valid(sys, w)?;
    f0.check_against(sys)?;
    let mut warnings = Vec::new();
    if !pbh_exact_detectability(&sys.a, &sys.c, &w.q, DEFAULT_PBH_TOLERANCE)? {
        warnings.push(
            "(A, C | Q) failed the exact-detectability test; P* may not be stabilizing".to_string(),
        );
    }

    let clock = Stopwatch::start();
    let mut log = IterationLog::default();
    let mut gain = f0.clone();
    let mut p = evaluate_with_radius(sys, w, &gain)?;
    for i in 0..max_iter {
        let next = policy_improve(sys, w, &p.0)?;
        let step_norm = (next.matrix() - gain.matrix()).norm();
        let residual = gare_residual(sys, w, &p.0)?.norm();
        let monotonicity = log.last().map(|prev| {
            SymMatrix::symmetrize(&prev.value - p.0.matrix()).min_eigenvalue()
        });
        log.entries.push(IterationEntry {
            iter: i,
            value: p.0.matrix().clone(),
            gain: gain.matrix().clone(),
            next_gain: next.matrix().clone(),
            gare_residual: residual,
            step_norm,
            wall_time_s: clock.seconds(),
            spectral_radius: Some(p.1),
            monotonicity,
            rel_err_f: None,
            rel_err_x: None,
            stil_min_eig: None,
        });
        gain = next;
        if step_norm <= tol {
            log.converged = true;
            break;
        }
        p = evaluate_with_radius(sys, w, &gain)?;
    }

    // On convergence `gain` is F^(i+1) = improve(P^(i)); otherwise it is the
    // newest evaluated gain and `p` its cost.
    let p_final = p.0;
    let f_final = if log.converged {
        gain
    } else {
        policy_improve(sys, w, &p_final)?
    };
    let x = optimal_qfunction(sys, w, &p_final)?;
    let gare = gare_residual(sys, w, &p_final)?.norm();
    Ok(GareSolution {
        p: p_final,
        f: f_final,
        x,
        converged: log.converged,
        iterations: log.len(),
        gare_residual: gare,
        log,
        warnings,
    })
}

fn evaluate_with_radius(
    sys: &StochasticLinearSystem,
    w: &CostWeights,
    gain: &FeedbackGain,
) -> Result<(SymMatrix, f64)> {
    let cl = close_loop(sys, gain)?;
    let radius = is_asms(&cl.a, &cl.c)?.spectral_radius;
    Ok((policy_evaluate(sys, w, gain)?, radius))
}
