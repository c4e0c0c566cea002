//! Plant, cost weights, and the closed-loop / augmented constructions every
//! solver builds on.
//!
//! The plant is
//!
//! ```text
//! x_{k+1} = A x_k + B u_k + Σ_i (C_i x_k + D_i u_k) w^i_k
//! ```
//!
//! with `N ≥ 1` mutually independent zero-mean unit-variance noise channels.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlqrError};
use crate::linalg::{block_diag, hstack, matrix_serde, vstack, SymMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct StochasticLinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: Vec<DMatrix<f64>>,
    pub d: Vec<DMatrix<f64>>,
}

impl StochasticLinearSystem {
    /// Builds a system and checks shapes and finiteness.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: Vec<DMatrix<f64>>,
        d: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let sys = StochasticLinearSystem { a, b, c, d };
        let report = sys.structural_report();
        if report.is_valid() {
            Ok(sys)
        } else {
            Err(SlqrError::InvalidSystem(report))
        }
    }

    /// Single-channel convenience constructor.
    pub fn single_channel(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self> {
        Self::new(a, b, vec![c], vec![d])
    }

    /// Scalar plant `x+ = a x + b u + (c x + d u) w`.
    pub fn scalar(a: f64, b: f64, c: f64, d: f64) -> Self {
        let s = |v| DMatrix::from_element(1, 1, v);
        StochasticLinearSystem {
            a: s(a),
            b: s(b),
            c: vec![s(c)],
            d: vec![s(d)],
        }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn channels(&self) -> usize {
        self.c.len()
    }

    /// Copy with all diffusion matrices set to zero.
    pub fn deterministic_part(&self) -> Self {
        let (n, m) = (self.n(), self.m());
        StochasticLinearSystem {
            a: self.a.clone(),
            b: self.b.clone(),
            c: vec![DMatrix::zeros(n, n); self.channels().max(1)],
            d: vec![DMatrix::zeros(n, m); self.channels().max(1)],
        }
    }

    fn structural_report(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let n = self.a.nrows();
        if !self.a.is_square() {
            report.push(format!(
                "A must be square, got {}x{}",
                self.a.nrows(),
                self.a.ncols()
            ));
        }
        if self.b.nrows() != n {
            report.push(format!("B has {} rows, expected {n}", self.b.nrows()));
        }
        if self.b.ncols() == 0 {
            report.push("B must have at least one column".to_string());
        }
        let m = self.b.ncols();
        if self.c.is_empty() {
            report.push("at least one noise channel is required (C is empty)".to_string());
        }
        if self.c.len() != self.d.len() {
            report.push(format!(
                "channel-count mismatch: C has {} matrices, D has {}",
                self.c.len(),
                self.d.len()
            ));
        }
        for (i, c) in self.c.iter().enumerate() {
            if c.shape() != (n, n) {
                report.push(format!(
                    "C[{i}] is {}x{}, expected {n}x{n}",
                    c.nrows(),
                    c.ncols()
                ));
            }
        }
        for (i, d) in self.d.iter().enumerate() {
            if d.shape() != (n, m) {
                report.push(format!(
                    "D[{i}] is {}x{}, expected {n}x{m}",
                    d.nrows(),
                    d.ncols()
                ));
            }
        }
        let all = std::iter::once(&self.a)
            .chain(std::iter::once(&self.b))
            .chain(&self.c)
            .chain(&self.d);
        if all.flat_map(|m| m.iter()).any(|v| !v.is_finite()) {
            report.push("system matrices contain non-finite entries".to_string());
        }
        report
    }
}

/// State and input weights of the quadratic cost `Σ x'Qx + u'Ru`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub q: SymMatrix,
    pub r: SymMatrix,
}

impl CostWeights {
    pub fn new(q: SymMatrix, r: SymMatrix) -> Self {
        CostWeights { q, r }
    }

    pub fn scalar(q: f64, r: f64) -> Self {
        CostWeights {
            q: SymMatrix::from_diagonal(&[q]),
            r: SymMatrix::from_diagonal(&[r]),
        }
    }
}

/// `Λ = diag(Q, R)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaBlock {
    pub value: SymMatrix,
    n: usize,
}

impl LambdaBlock {
    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn q_block(&self) -> DMatrix<f64> {
        self.value.view((0, 0), (self.n, self.n)).into_owned()
    }

    pub fn r_block(&self) -> DMatrix<f64> {
        let m = self.value.dim() - self.n;
        self.value.view((self.n, self.n), (m, m)).into_owned()
    }

    /// Scaled copy, mainly for the homogeneous `Λ = 0` cases.
    pub fn scaled(&self, factor: f64) -> LambdaBlock {
        LambdaBlock {
            value: SymMatrix::symmetrize(self.value.matrix() * factor),
            n: self.n,
        }
    }
}

pub fn lambda_of(w: &CostWeights) -> LambdaBlock {
    LambdaBlock {
        value: SymMatrix::symmetrize(block_diag(&w.q, &w.r)),
        n: w.q.dim(),
    }
}

/// State feedback `u = F x` with `F` of shape `m×n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeedbackGain(#[serde(with = "matrix_serde")] pub DMatrix<f64>);

impl FeedbackGain {
    pub fn new(f: DMatrix<f64>) -> Result<Self> {
        if f.iter().any(|v| !v.is_finite()) {
            return Err(SlqrError::NonFinite {
                context: "feedback gain",
            });
        }
        Ok(FeedbackGain(f))
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        FeedbackGain(DMatrix::zeros(m, n))
    }

    pub fn scalar(f: f64) -> Self {
        FeedbackGain(DMatrix::from_element(1, 1, f))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn inputs(&self) -> usize {
        self.0.nrows()
    }

    pub fn states(&self) -> usize {
        self.0.ncols()
    }

    pub(crate) fn check_against(&self, sys: &StochasticLinearSystem) -> Result<()> {
        if self.0.shape() != (sys.m(), sys.n()) {
            return Err(SlqrError::dims(
                "feedback gain",
                format!("{}x{}", sys.m(), sys.n()),
                format!("{}x{}", self.0.nrows(), self.0.ncols()),
            ));
        }
        Ok(())
    }
}

/// `(A + BF, {C_i + D_i F})`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoop {
    pub a: DMatrix<f64>,
    pub c: Vec<DMatrix<f64>>,
}

/// Augmented system on `v = [x; u]`:
/// `A_F = [A B; FA FB]`, `C_F,i = [C_i D_i; FC_i FD_i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedSystem {
    pub a: DMatrix<f64>,
    pub c: Vec<DMatrix<f64>>,
}

impl AugmentedSystem {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

pub fn close_loop(sys: &StochasticLinearSystem, gain: &FeedbackGain) -> Result<ClosedLoop> {
    gain.check_against(sys)?;
    let f = gain.matrix();
    Ok(ClosedLoop {
        a: &sys.a + &sys.b * f,
        c: sys.c.iter().zip(&sys.d).map(|(c, d)| c + d * f).collect(),
    })
}

/// `[I; F]·[X Y]` stacked, i.e. `[X Y; FX FY]`.
fn lift(x: &DMatrix<f64>, y: &DMatrix<f64>, f: &DMatrix<f64>) -> DMatrix<f64> {
    let top = hstack(x, y);
    let bottom = f * &top;
    vstack(&top, &bottom)
}

pub fn augment(sys: &StochasticLinearSystem, gain: &FeedbackGain) -> Result<AugmentedSystem> {
    gain.check_against(sys)?;
    let f = gain.matrix();
    Ok(AugmentedSystem {
        a: lift(&sys.a, &sys.b, f),
        c: augmented_noise(&sys.c, &sys.d, gain),
    })
}

/// Diffusion blocks of the augmented system. Needs only `C_i`, `D_i` and `F`,
/// which is all the partially model-free learner is allowed to know.
pub fn augmented_noise(
    c: &[DMatrix<f64>],
    d: &[DMatrix<f64>],
    gain: &FeedbackGain,
) -> Vec<DMatrix<f64>> {
    c.iter()
        .zip(d)
        .map(|(ci, di)| lift(ci, di, gain.matrix()))
        .collect()
}

/// Every violated invariant, as a human-readable line. Empty means valid.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.issues.iter().any(|i| i.contains(needle))
    }

    fn push(&mut self, issue: String) {
        self.issues.push(issue);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return write!(f, "valid");
        }
        write!(f, "{}", self.issues.join("; "))
    }
}

/// Diagnoses shapes, finiteness, `Q ⪰ 0` and `R ≻ 0`. Never fails.
pub fn validate_system(sys: &StochasticLinearSystem, w: &CostWeights) -> ValidationReport {
    let mut report = sys.structural_report();
    let (n, m) = (sys.a.nrows(), sys.b.ncols());
    if w.q.dim() != n {
        report.push(format!("Q is {0}x{0}, expected {n}x{n}", w.q.dim()));
    }
    if w.r.dim() != m {
        report.push(format!("R is {0}x{0}, expected {m}x{m}", w.r.dim()));
    }
    if w.q.iter().chain(w.r.iter()).any(|v| !v.is_finite()) {
        report.push("cost weights contain non-finite entries".to_string());
        return report;
    }
    let q_tol = 1e-10 * w.q.norm().max(1.0);
    if !w.q.is_psd(q_tol) {
        report.push(format!(
            "Q not positive semidefinite (smallest eigenvalue {:.3e})",
            w.q.min_eigenvalue()
        ));
    }
    if !w.r.is_pd(0.0) {
        report.push(format!(
            "R not positive definite (smallest eigenvalue {:.3e})",
            w.r.min_eigenvalue()
        ));
    }
    report
}

pub(crate) fn ensure_valid(sys: &StochasticLinearSystem, w: &CostWeights) -> Result<()> {
    let report = validate_system(sys, w);
    if report.is_valid() {
        Ok(())
    } else {
        Err(SlqrError::InvalidSystem(report))
    }
}
