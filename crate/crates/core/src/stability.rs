//! Mean-square stability: the generalized Lyapunov operator
//! `X ↦ A X A' + Σ C_i X C_i'`, its spectrum, the two generalized Lyapunov
//! equations (GLE), and PBH-style exact observability/detectability tests.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Result, SlqrError};
use crate::linalg::{unvec, vec_of, SymMatrix};

/// Relative tolerance used by the PBH null tests unless the caller overrides it.
pub const DEFAULT_PBH_TOLERANCE: f64 = 1e-8;

const GLE_RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Matrix of the generalized Lyapunov operator in `vec` coordinates:
/// `M = A⊗A + Σ C_i⊗C_i`, so `M vec(X) = vec(A X A' + Σ C_i X C_i')`.
#[derive(Clone, Debug, PartialEq)]
pub struct LyapOperatorMatrix {
    pub matrix: DMatrix<f64>,
    state_dim: usize,
}

impl LyapOperatorMatrix {
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// `A X A' + Σ C_i X C_i'` evaluated through the Kronecker matrix.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        unvec(&(&self.matrix * vec_of(x)), self.state_dim)
    }

    /// `A' X A + Σ C_i' X C_i`, the adjoint operator.
    pub fn apply_adjoint(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        unvec(&(self.matrix.tr_mul(&vec_of(x))), self.state_dim)
    }
}

fn check_square_family(a: &DMatrix<f64>, cs: &[DMatrix<f64>]) -> Result<usize> {
    if !a.is_square() {
        return Err(SlqrError::dims(
            "Lyapunov operator",
            "square A",
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    let d = a.nrows();
    if let Some(c) = cs.iter().find(|c| c.shape() != (d, d)) {
        return Err(SlqrError::dims(
            "Lyapunov operator",
            format!("{d}x{d} diffusion matrix"),
            format!("{}x{}", c.nrows(), c.ncols()),
        ));
    }
    Ok(d)
}

/// An empty `cs` is the same as a single zero channel.
pub fn lyap_operator_matrix(a: &DMatrix<f64>, cs: &[DMatrix<f64>]) -> Result<LyapOperatorMatrix> {
    let d = check_square_family(a, cs)?;
    let mut m = a.kronecker(a);
    for c in cs {
        m += c.kronecker(c);
    }
    Ok(LyapOperatorMatrix {
        matrix: m,
        state_dim: d,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumReport {
    #[serde(skip)]
    pub eigenvalues: Vec<Complex64>,
    pub spectral_radius: f64,
    pub asms: bool,
}

pub(crate) fn eigenvalues(m: &DMatrix<f64>, context: &'static str) -> Result<Vec<Complex64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    // The QR sweep can fail to deflate at machine-epsilon resolution on
    // repeated or clustered eigenvalues; retry with a looser criterion.
    for eps in [f64::EPSILON, 4.0 * f64::EPSILON, 1e-14, 1e-12] {
        if let Some(schur) = m.clone().try_schur(eps, 10_000) {
            return Ok(schur.complex_eigenvalues().iter().copied().collect());
        }
    }
    Err(SlqrError::EigenSolver { context })
}

/// Spectrum of the Lyapunov operator with an explicit stability margin:
/// `asms ⟺ ρ < 1 - margin`.
pub fn spectrum(a: &DMatrix<f64>, cs: &[DMatrix<f64>], margin: f64) -> Result<SpectrumReport> {
    let op = lyap_operator_matrix(a, cs)?;
    let eigenvalues = eigenvalues(&op.matrix, "Lyapunov operator spectrum")?;
    let spectral_radius = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(SpectrumReport {
        eigenvalues,
        spectral_radius,
        asms: spectral_radius < 1.0 - margin,
    })
}

/// Mean-square stability test: `ρ(A⊗A + Σ C_i⊗C_i) < 1`.
pub fn is_asms(a: &DMatrix<f64>, cs: &[DMatrix<f64>]) -> Result<SpectrumReport> {
    spectrum(a, cs, 0.0)
}

/// Which of the two generalized Lyapunov equations to solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GleKind {
    /// `A' S A + Σ C_i' S C_i + Q = S` (observability type).
    Primal,
    /// `A S A' + Σ C_i S C_i' + Ξ = S` (controllability type).
    Dual,
}

/// Residual `op(S) + forcing - S` of the requested equation.
pub fn gle_residual(
    op: &LyapOperatorMatrix,
    kind: GleKind,
    forcing: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> DMatrix<f64> {
    let applied = match kind {
        GleKind::Primal => op.apply_adjoint(s),
        GleKind::Dual => op.apply(s),
    };
    applied + forcing - s
}

/// Dense solve of `(I - M) vec(S) = vec(forcing)` (or `I - M'` for the primal
/// equation) without the stability precondition. Symmetry is restored as
/// `(S + S')/2` and one round of iterative refinement is applied.
pub fn solve_gle_unchecked(
    a: &DMatrix<f64>,
    cs: &[DMatrix<f64>],
    forcing: &DMatrix<f64>,
    kind: GleKind,
) -> Result<DMatrix<f64>> {
    let op = lyap_operator_matrix(a, cs)?;
    let d = op.state_dim();
    if forcing.shape() != (d, d) {
        return Err(SlqrError::dims(
            "GLE forcing term",
            format!("{d}x{d}"),
            format!("{}x{}", forcing.nrows(), forcing.ncols()),
        ));
    }
    let lhs = match kind {
        GleKind::Primal => DMatrix::identity(d * d, d * d) - op.matrix.transpose(),
        GleKind::Dual => DMatrix::identity(d * d, d * d) - &op.matrix,
    };
    let lu = lhs.lu();
    let solve = |rhs: &DVector<f64>| {
        lu.solve(rhs)
            .filter(|x| x.iter().all(|v| v.is_finite()))
            .ok_or(SlqrError::Singular {
                context: "generalized Lyapunov equation",
            })
    };
    let mut s = unvec(&solve(&vec_of(forcing))?, d);
    s = (&s + s.transpose()) * 0.5;
    let residual = gle_residual(&op, kind, forcing, &s);
    if residual.norm() > 0.0 {
        let correction = unvec(&solve(&vec_of(&residual))?, d);
        s += (&correction + correction.transpose()) * 0.5;
    }
    Ok(s)
}

fn solve_checked(
    a: &DMatrix<f64>,
    cs: &[DMatrix<f64>],
    forcing: &SymMatrix,
    kind: GleKind,
) -> Result<SymMatrix> {
    let report = is_asms(a, cs)?;
    if !report.asms {
        return Err(SlqrError::NotAsms {
            spectral_radius: report.spectral_radius,
        });
    }
    let s = solve_gle_unchecked(a, cs, forcing.matrix(), kind)?;
    let op = lyap_operator_matrix(a, cs)?;
    let residual = gle_residual(&op, kind, forcing.matrix(), &s).norm();
    if residual > GLE_RESIDUAL_TOLERANCE * (1.0 + s.norm()) {
        // Only reachable when ρ is within rounding of 1.
        return Err(SlqrError::Singular {
            context: "generalized Lyapunov equation (spectral radius near 1)",
        });
    }
    Ok(SymMatrix::symmetrize(s))
}

/// Solves `A' S A + Σ C_i' S C_i + Q = S`. Requires `(A, {C_i})` ASMS.
pub fn solve_gle_primal(a: &DMatrix<f64>, cs: &[DMatrix<f64>], q: &SymMatrix) -> Result<SymMatrix> {
    solve_checked(a, cs, q, GleKind::Primal)
}

/// Solves `A S A' + Σ C_i S C_i' + Ξ = S`. Requires `(A, {C_i})` ASMS.
pub fn solve_gle_dual(a: &DMatrix<f64>, cs: &[DMatrix<f64>], xi: &SymMatrix) -> Result<SymMatrix> {
    solve_checked(a, cs, xi, GleKind::Dual)
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Smallest singular value of `[(M - λI)/‖M‖; (I⊗Q)/‖Q‖]` for each distinct
/// eigenvalue λ of `M` that passes `keep`. A value near zero means some
/// (possibly complex, non-symmetric) eigenvector `X` of the operator has
/// `QX = 0`.
fn unobserved_mode_gaps(
    a: &DMatrix<f64>,
    cs: &[DMatrix<f64>],
    q: &SymMatrix,
    keep: impl Fn(Complex64) -> bool,
) -> Result<Vec<(Complex64, f64)>> {
    let op = lyap_operator_matrix(a, cs)?;
    let d = op.state_dim();
    if q.dim() != d {
        return Err(SlqrError::dims(
            "PBH test weight",
            format!("{d}x{d}"),
            format!("{0}x{0}", q.dim()),
        ));
    }
    let eigs = eigenvalues(&op.matrix, "PBH eigenvalues")?;
    let m_scale = op.matrix.norm().max(f64::MIN_POSITIVE);
    let q_scale = q.norm();
    let dd = d * d;
    // vec(QX) = (I ⊗ Q) vec(X) in column-major coordinates.
    let q_lift = to_complex(&(DMatrix::identity(d, d).kronecker(q.matrix()) / q_scale));
    let m_c = to_complex(&(&op.matrix / m_scale));

    let mut seen: Vec<Complex64> = Vec::new();
    let mut gaps = Vec::new();
    for lambda in eigs.into_iter().filter(|l| keep(*l)) {
        if seen
            .iter()
            .any(|s| (s - lambda).norm() <= 1e-10 * (1.0 + lambda.norm()))
        {
            continue;
        }
        seen.push(lambda);
        let mut stacked = DMatrix::<Complex64>::zeros(2 * dd, dd);
        let shift = lambda / m_scale;
        let mut top = m_c.clone();
        for i in 0..dd {
            top[(i, i)] -= shift;
        }
        stacked.rows_mut(0, dd).copy_from(&top);
        stacked.rows_mut(dd, dd).copy_from(&q_lift);
        let sigma_min = stacked.singular_values().min();
        gaps.push((lambda, sigma_min));
    }
    Ok(gaps)
}

/// Exact observability of `(A, {C_i} | Q)`: no eigenvector `X` of the
/// Lyapunov operator (any eigenvalue) with `QX = 0`.
pub fn pbh_exact_observability(
    a: &DMatrix<f64>,
    cs: &[DMatrix<f64>],
    q: &SymMatrix,
    tol: f64,
) -> Result<bool> {
    if q.norm() == 0.0 {
        check_square_family(a, cs)?;
        return Ok(a.nrows() == 0);
    }
    let gaps = unobserved_mode_gaps(a, cs, q, |_| true)?;
    Ok(gaps.iter().all(|(_, gap)| *gap > tol))
}

/// Exact detectability of `(A, {C_i} | Q)`: only eigenvalues with
/// `|λ| ≥ 1 - tol` may not carry an eigenvector with `QX = 0`.
pub fn pbh_exact_detectability(
    a: &DMatrix<f64>,
    cs: &[DMatrix<f64>],
    q: &SymMatrix,
    tol: f64,
) -> Result<bool> {
    if q.norm() == 0.0 {
        return Ok(!is_asms(a, cs)?.eigenvalues.iter().any(|l| l.norm() >= 1.0 - tol));
    }
    let gaps = unobserved_mode_gaps(a, cs, q, |l| l.norm() >= 1.0 - tol)?;
    Ok(gaps.iter().all(|(_, gap)| *gap > tol))
}
