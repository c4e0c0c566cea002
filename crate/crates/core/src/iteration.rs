//! Per-iteration records shared by the three solvers, with CSV export.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct IterationEntry {
    /// Zero-based index `i` of the gain `F^(i)` that was evaluated.
    pub iter: usize,
    /// `P^(i)` for policy iteration, `X^i` for the primal-dual solvers.
    pub value: DMatrix<f64>,
    /// `F^(i)`.
    pub gain: DMatrix<f64>,
    /// `F^(i+1)`.
    pub next_gain: DMatrix<f64>,
    /// Frobenius norm of the GARE residual at the value matrix `P^(i)`.
    /// `NaN` when the model is unavailable (model-free learning).
    pub gare_residual: f64,
    /// `‖F^(i+1) - F^(i)‖`.
    pub step_norm: f64,
    pub wall_time_s: f64,
    /// Closed-loop spectral radius of `F^(i)`, when the model is known.
    pub spectral_radius: Option<f64>,
    /// `λ_min(P^(i-1) - P^(i))`; absent on the first iteration.
    pub monotonicity: Option<f64>,
    /// `‖F^(i+1) - F*‖ / ‖F*‖` against a reference solution.
    pub rel_err_f: Option<f64>,
    /// `‖X^i - X*‖ / ‖X*‖` against a reference solution.
    pub rel_err_x: Option<f64>,
    /// Smallest eigenvalue of the estimated `S̃(F^(i))`.
    pub stil_min_eig: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationLog {
    pub entries: Vec<IterationEntry>,
    pub converged: bool,
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Shortest round-trip representation.
pub(crate) fn num(v: f64) -> String {
    format!("{v:e}")
}

impl IterationLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last(&self) -> Option<&IterationEntry> {
        self.entries.last()
    }

    /// `‖value^(i+1) - value^(i)‖` for consecutive entries.
    pub fn value_steps(&self) -> Vec<f64> {
        self.entries
            .windows(2)
            .map(|w| (&w[1].value - &w[0].value).norm())
            .collect()
    }

    /// Ratios `‖ΔP^(i+1)‖ / ‖ΔP^(i)‖²` for consecutive value steps whose
    /// numerator is still above `floor` (i.e. not yet at rounding level).
    pub fn quadratic_rate_constants(&self, floor: f64) -> Vec<f64> {
        let steps = self.value_steps();
        steps
            .windows(2)
            .filter(|w| w[1] > floor && w[0] > 0.0)
            .map(|w| w[1] / (w[0] * w[0]))
            .collect()
    }

    /// `iter,gare_residual,step_norm,wall_time_s`. Wall time is left blank
    /// unless `timing` is set, so repeated runs produce identical files.
    pub fn write_solver_csv<W: Write>(&self, mut out: W, timing: bool) -> Result<()> {
        writeln!(out, "iter,gare_residual,step_norm,wall_time_s")?;
        for e in &self.entries {
            let wall = if timing { num(e.wall_time_s) } else { String::new() };
            writeln!(
                out,
                "{},{},{},{}",
                e.iter,
                num(e.gare_residual),
                num(e.step_norm),
                wall
            )?;
        }
        Ok(())
    }

    /// `iter,rel_err_F,rel_err_X,step_norm,Stil_min_eig,wall_time_s`, where
    /// `iter = i + 1` labels the learned gain `F^(i+1)`.
    pub fn write_learning_csv<W: Write>(&self, mut out: W, timing: bool) -> Result<()> {
        writeln!(out, "iter,rel_err_F,rel_err_X,step_norm,Stil_min_eig,wall_time_s")?;
        for e in &self.entries {
            let wall = if timing { num(e.wall_time_s) } else { String::new() };
            writeln!(
                out,
                "{},{},{},{},{},{}",
                e.iter + 1,
                opt(e.rel_err_f),
                opt(e.rel_err_x),
                num(e.step_norm),
                opt(e.stil_min_eig),
                wall
            )?;
        }
        Ok(())
    }
}

/// Elapsed-seconds clock; always zero on `wasm32`, where `Instant` is unavailable.
pub(crate) struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    pub(crate) fn start() -> Self {
        Stopwatch {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    pub(crate) fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}
