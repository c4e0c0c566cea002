//! Model-based primal-dual iteration on the augmented state `v = [x; u]`,
//! with KKT and duality-gap certificates.
//!
//! The dual variable `X` is the Q-function matrix of the current gain; the
//! primal variable `S̃` is the summed second moment of the augmented state.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlqrError};
use crate::iteration::{IterationEntry, IterationLog, Stopwatch};
use crate::linalg::{condition_number, hstack, identity_over, SymMatrix};
use crate::model::{
    augment, ensure_valid, lambda_of, CostWeights, FeedbackGain, LambdaBlock,
    StochasticLinearSystem,
};
use crate::riccati::gare_residual;
use crate::stability::{is_asms, solve_gle_dual, solve_gle_primal, spectrum};

/// Largest accepted condition number of `X₂₂` in the primal update.
pub const MAX_X22_CONDITION: f64 = 1e12;

/// Dual iterate `X = [X₁₁ X₁₂; X₁₂' X₂₂]` with `X₁₁` of size `n×n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualIterate {
    #[serde(rename = "X")]
    pub x: SymMatrix,
    pub n: usize,
}

impl DualIterate {
    pub fn new(x: SymMatrix, n: usize) -> Result<Self> {
        if n > x.dim() {
            return Err(SlqrError::dims(
                "dual iterate state block",
                format!("at most {}", x.dim()),
                n,
            ));
        }
        Ok(DualIterate { x, n })
    }

    pub fn m(&self) -> usize {
        self.x.dim() - self.n
    }

    pub fn x11(&self) -> DMatrix<f64> {
        self.x.view((0, 0), (self.n, self.n)).into_owned()
    }

    pub fn x12(&self) -> DMatrix<f64> {
        self.x.view((0, self.n), (self.n, self.m())).into_owned()
    }

    pub fn x22(&self) -> DMatrix<f64> {
        self.x.view((self.n, self.n), (self.m(), self.m())).into_owned()
    }

    /// `[I F']·X·[I; F]`, the state-space value matrix of `F` induced by `X`.
    pub fn pull_back(&self, gain: &FeedbackGain) -> SymMatrix {
        let e = identity_over(gain.matrix());
        SymMatrix::symmetrize(e.transpose() * self.x.matrix() * e)
    }
}

/// Primal iterate: summed second moment `S` and the initial-moment matrix `Ξ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimalIterate {
    #[serde(rename = "S")]
    pub s: SymMatrix,
    #[serde(rename = "Xi")]
    pub xi: SymMatrix,
    pub n: usize,
}

impl PrimalIterate {
    pub fn s11(&self) -> DMatrix<f64> {
        self.s.view((0, 0), (self.n, self.n)).into_owned()
    }

    pub fn s12(&self) -> DMatrix<f64> {
        let m = self.s.dim() - self.n;
        self.s.view((0, self.n), (self.n, m)).into_owned()
    }

    pub fn s22(&self) -> DMatrix<f64> {
        let m = self.s.dim() - self.n;
        self.s.view((self.n, self.n), (m, m)).into_owned()
    }

    /// `F = S₁₂'S₁₁⁻¹`. Only meaningful when the moments are generated by
    /// feedback from the first step, i.e. `S = [I; F]S₁₁[I; F]'`.
    pub fn recover_gain(&self) -> Result<FeedbackGain> {
        let s11 = self.s11();
        let solved = s11
            .clone()
            .cholesky()
            .map(|c| c.solve(&self.s12()))
            .or_else(|| s11.lu().solve(&self.s12()))
            .ok_or(SlqrError::Singular { context: "S11" })?;
        FeedbackGain::new(solved.transpose())
    }
}

/// KKT residuals of the trace-minimization problem at a candidate point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KKTReport {
    /// `‖A_F S̃ A_F' + ΣC_F S̃ C_F' + Ξ - S̃‖`.
    pub r_primal: f64,
    /// `λ_min(S̃)`; must be positive.
    pub s_min: f64,
    /// `‖A_F'XA_F + ΣC_F'XC_F + Λ - X‖`.
    pub r_dual: f64,
    /// `‖(X₁₂' + X₂₂F)·Ψ‖` with `Ψ = [A B]S̃[A B]' + Σ[C D]S̃[C D]'`.
    pub r_station: f64,
    /// Norm of the recovered dual slack `X₀`, the residual behind `r_dual`.
    pub x0_norm: f64,
}

impl KKTReport {
    /// Every residual at most `tol` and `S̃ ≻ 0`.
    pub fn satisfied(&self, tol: f64) -> bool {
        self.r_primal <= tol
            && self.r_dual <= tol
            && self.r_station <= tol
            && self.x0_norm <= tol
            && self.s_min > 0.0
    }
}

/// One certification record: KKT residuals plus the duality gap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    #[serde(flatten)]
    pub kkt: KKTReport,
    pub duality_gap: f64,
}

/// Q-function matrix of `F`: solves `A_F'XA_F + ΣC_F'XC_F + Λ = X`.
pub fn dual_update(
    sys: &StochasticLinearSystem,
    w: &CostWeights,
    gain: &FeedbackGain,
) -> Result<DualIterate> {
    ensure_valid(sys, w)?;
    let aug = augment(sys, gain)?;
    let report = is_asms(&aug.a, &aug.c)?;
    if !report.asms {
        return Err(SlqrError::NotStabilizing {
            spectral_radius: report.spectral_radius,
        });
    }
    let x = solve_gle_primal(&aug.a, &aug.c, &lambda_of(w).value)?;
    DualIterate::new(x, sys.n())
}

/// `F = -X₂₂⁻¹X₁₂'`.
pub fn primal_update(x: &DualIterate) -> Result<FeedbackGain> {
    let x22 = x.x22();
    let cond = condition_number(&x22);
    if !(cond <= MAX_X22_CONDITION) {
        return Err(SlqrError::IllConditioned {
            context: "X22 in the primal update",
            condition: cond,
        });
    }
    let rhs = x.x12().transpose();
    let solved = x22
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| x22.lu().solve(&rhs))
        .ok_or(SlqrError::Singular { context: "X22" })?;
    FeedbackGain::new(-solved)
}

/// Result of [`run_model_based`].
#[derive(Clone, Debug)]
pub struct PrimalDualSolution {
    pub x: DualIterate,
    pub f: FeedbackGain,
    /// `[I F']X[I; F]` at the final dual iterate and the gain it was built from.
    pub p: SymMatrix,
    pub converged: bool,
    /// `value` holds `X^i`; `gare_residual` is taken at the pulled-back `P^i`.
    pub log: IterationLog,
}

/// Alternates [`dual_update`] and [`primal_update`] from a stabilizing
/// gain until `‖F^i - F^(i+1)‖ ≤ tol`.
pub fn run_model_based(
    sys: &StochasticLinearSystem,
    w: &CostWeights,
    f0: &FeedbackGain,
    tol: f64,
    max_iter: usize,
) -> Result<PrimalDualSolution> {
    ensure_valid(sys, w)?;
    f0.check_against(sys)?;
    let clock = Stopwatch::start();
    let mut log = IterationLog::default();
    let mut gain = f0.clone();
    let mut x = dual_update(sys, w, &gain)?;
    let mut x_gain = gain.clone();
    let mut prev_p: Option<SymMatrix> = None;
    for i in 0..max_iter {
        let next = primal_update(&x)?;
        let p = x.pull_back(&gain);
        let step_norm = (next.matrix() - gain.matrix()).norm();
        let aug = augment(sys, &gain)?;
        log.entries.push(IterationEntry {
            iter: i,
            value: x.x.matrix().clone(),
            gain: gain.matrix().clone(),
            next_gain: next.matrix().clone(),
            gare_residual: gare_residual(sys, w, &p)?.norm(),
            step_norm,
            wall_time_s: clock.seconds(),
            spectral_radius: Some(spectrum(&aug.a, &aug.c, 0.0)?.spectral_radius),
            monotonicity: prev_p
                .as_ref()
                .map(|q| SymMatrix::symmetrize(q.matrix() - p.matrix()).min_eigenvalue()),
            rel_err_f: None,
            rel_err_x: None,
            stil_min_eig: None,
        });
        prev_p = Some(p);
        gain = next;
        if step_norm <= tol {
            log.converged = true;
            break;
        }
        x = dual_update(sys, w, &gain)?;
        x_gain = gain.clone();
    }
    let f = if log.converged {
        gain
    } else {
        primal_update(&x)?
    };
    Ok(PrimalDualSolution {
        p: x.pull_back(&x_gain),
        x,
        f,
        converged: log.converged,
        log,
    })
}

/// `Σ[Cᵢ Dᵢ]·S̃·[Cᵢ Dᵢ]'` plus the deterministic term `[A B]S̃[A B]'`.
fn next_state_moment(sys: &StochasticLinearSystem, s: &DMatrix<f64>) -> DMatrix<f64> {
    let ab = hstack(&sys.a, &sys.b);
    let mut psi = &ab * s * ab.transpose();
    for (c, d) in sys.c.iter().zip(&sys.d) {
        let cd = hstack(c, d);
        psi += &cd * s * cd.transpose();
    }
    psi
}

fn check_aug_shape(context: &'static str, dim: usize, m: &DMatrix<f64>) -> Result<()> {
    if m.shape() != (dim, dim) {
        return Err(SlqrError::dims(
            context,
            format!("{dim}x{dim}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

/// KKT residuals at `(S̃, X, F)` with initial moment `Ξ`.
pub fn kkt_residuals(
    sys: &StochasticLinearSystem,
    w: &CostWeights,
    s: &SymMatrix,
    x: &DualIterate,
    gain: &FeedbackGain,
    xi: &SymMatrix,
) -> Result<KKTReport> {
    let aug = augment(sys, gain)?;
    let dim = aug.dim();
    check_aug_shape("S̃", dim, s.matrix())?;
    check_aug_shape("X", dim, x.x.matrix())?;
    check_aug_shape("Ξ", dim, xi.matrix())?;
    check_aug_shape("Λ", dim, lambda_of(w).value.matrix())?;

    let mut primal = &aug.a * s.matrix() * aug.a.transpose() + xi.matrix() - s.matrix();
    let mut dual = aug.a.transpose() * x.x.matrix() * &aug.a + lambda_of(w).value.matrix()
        - x.x.matrix();
    for c in &aug.c {
        primal += c * s.matrix() * c.transpose();
        dual += c.transpose() * x.x.matrix() * c;
    }
    let station = (x.x12().transpose() + x.x22() * gain.matrix()) * next_state_moment(sys, s);
    let r_dual = dual.norm();
    Ok(KKTReport {
        r_primal: primal.norm(),
        s_min: if dim == 0 { 0.0 } else { s.min_eigenvalue() },
        r_dual,
        r_station: station.norm(),
        x0_norm: r_dual,
    })
}

/// `Tr(ΛS̃) - Tr(ΞX)`.
pub fn duality_gap(s: &SymMatrix, x: &DualIterate, lam: &LambdaBlock, xi: &SymMatrix) -> Result<f64> {
    let dim = lam.value.dim();
    check_aug_shape("S̃", dim, s.matrix())?;
    check_aug_shape("X", dim, x.x.matrix())?;
    check_aug_shape("Ξ", dim, xi.matrix())?;
    Ok(lam.value.trace_product(s.matrix()) - xi.trace_product(x.x.matrix()))
}

/// `S̃` of `F` for initial moment `Ξ`: the dual GLE on the augmented system.
pub fn primal_moment(
    sys: &StochasticLinearSystem,
    gain: &FeedbackGain,
    xi: &SymMatrix,
) -> Result<PrimalIterate> {
    let aug = augment(sys, gain)?;
    check_aug_shape("Ξ", aug.dim(), xi.matrix())?;
    let s = solve_gle_dual(&aug.a, &aug.c, xi)?;
    Ok(PrimalIterate {
        s,
        xi: xi.clone(),
        n: sys.n(),
    })
}

/// Both certificates for a gain and initial moment.
pub fn certify(
    sys: &StochasticLinearSystem,
    w: &CostWeights,
    gain: &FeedbackGain,
    xi: &SymMatrix,
) -> Result<Certificate> {
    let x = dual_update(sys, w, gain)?;
    let primal = primal_moment(sys, gain, xi)?;
    Ok(Certificate {
        kkt: kkt_residuals(sys, w, &primal.s, &x, gain, xi)?,
        duality_gap: duality_gap(&primal.s, &x, &lambda_of(w), xi)?,
    })
}

/// Primal solution of the unmodified problem: initial states `z_l` with
/// `Z = Σz_l z_l'` and feedback from the first step, so `Ξ = [I; F]Z[I; F]'`.
pub fn unmodified_primal(
    sys: &StochasticLinearSystem,
    gain: &FeedbackGain,
    z: &SymMatrix,
) -> Result<PrimalIterate> {
    if z.dim() != sys.n() {
        return Err(SlqrError::dims(
            "Z",
            format!("{0}x{0}", sys.n()),
            format!("{0}x{0}", z.dim()),
        ));
    }
    let e = identity_over(gain.matrix());
    let xi = SymMatrix::symmetrize(&e * z.matrix() * e.transpose());
    primal_moment(sys, gain, &xi)
}

/// Largest `‖z_l z_l' - ([A B]v_l v_l'[A B]' + Σ[Cᵢ Dᵢ]v_l v_l'[Cᵢ Dᵢ]')‖`
/// over paired states `z_l` and augmented initial vectors `v_l`.
pub fn initial_moment_mismatch(
    sys: &StochasticLinearSystem,
    z: &[DVector<f64>],
    v0: &[DVector<f64>],
) -> Result<f64> {
    if z.len() != v0.len() {
        return Err(SlqrError::dims("initial vector pairs", z.len(), v0.len()));
    }
    let dim = sys.n() + sys.m();
    let mut worst = 0.0f64;
    for (zl, vl) in z.iter().zip(v0) {
        if zl.len() != sys.n() || vl.len() != dim {
            return Err(SlqrError::dims(
                "initial vector",
                format!("({}, {dim})", sys.n()),
                format!("({}, {})", zl.len(), vl.len()),
            ));
        }
        let vv = vl * vl.transpose();
        let gap = zl * zl.transpose() - next_state_moment(sys, &vv);
        worst = worst.max(gap.norm());
    }
    Ok(worst)
}
