//! Iteration traces and termination status shared by all solvers.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    InnerSolveFailed,
    Diverged,
}

impl SolveStatus {
    pub fn is_converged(self) -> bool {
        self == SolveStatus::Converged
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max_iterations",
            SolveStatus::InnerSolveFailed => "inner_solve_failed",
            SolveStatus::Diverged => "diverged",
        };
        f.write_str(s)
    }
}

/// One outer iteration: the residual at `X_k` and the step taken from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// `‖R(X_k)‖_F`
    pub residual_norm: f64,
    /// `‖R(X_k)‖_F / ‖C‖_F`
    pub relative_residual: f64,
    /// `λ_k`; `None` when no step was taken from `X_k`.
    pub step_size: Option<f64>,
    /// Upper bound `θ_k` of the step-size interval, when a line search ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    pub inner_iterations: usize,
    pub iterate_rank: usize,
    /// Inner residual norms, one per Krylov step.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inner_residuals: Vec<f64>,
}

impl IterationRecord {
    pub fn new(k: usize, residual_norm: f64, c_norm: f64, iterate_rank: usize) -> Self {
        IterationRecord {
            k,
            residual_norm,
            relative_residual: relative(residual_norm, c_norm),
            step_size: None,
            theta: None,
            inner_iterations: 0,
            iterate_rank,
            inner_residuals: Vec::new(),
        }
    }
}

pub(crate) fn relative(res: f64, c_norm: f64) -> f64 {
    if c_norm > 0.0 {
        res / c_norm
    } else {
        res
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: Vec<IterationRecord>,
    pub status: SolveStatus,
    /// Human-readable reason for the status.
    pub detail: String,
    pub wall_time: f64,
    pub final_relative_residual: f64,
    /// Smallest accepted step size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_step_size: Option<f64>,
    /// Largest Krylov basis dimension built (0 for dense solvers).
    #[serde(default)]
    pub max_basis_dim: usize,
    /// Whether every accepted iterate passed the nonnegativity monitor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonnegative_iterates: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SolveReport {
    pub(crate) fn new() -> Self {
        SolveReport {
            iterations: Vec::new(),
            status: SolveStatus::MaxIterations,
            detail: String::new(),
            wall_time: 0.0,
            final_relative_residual: f64::NAN,
            min_step_size: None,
            max_basis_dim: 0,
            nonnegative_iterates: None,
            warnings: Vec::new(),
        }
    }

    pub(crate) fn finish(&mut self, status: SolveStatus, detail: impl Into<String>, started: std::time::Instant) {
        self.status = status;
        self.detail = detail.into();
        self.wall_time = started.elapsed().as_secs_f64();
        if let Some(last) = self.iterations.last() {
            self.final_relative_residual = last.relative_residual;
        }
        self.min_step_size = self
            .iterations
            .iter()
            .filter_map(|r| r.step_size)
            .reduce(f64::min);
    }

    /// Number of steps taken (records carrying a step size).
    pub fn steps(&self) -> usize {
        self.iterations.iter().filter(|r| r.step_size.is_some()).count()
    }

    pub fn total_inner_iterations(&self) -> usize {
        self.iterations.iter().map(|r| r.inner_iterations).sum()
    }

    /// Average inner iterations per outer step.
    pub fn average_inner_iterations(&self) -> f64 {
        let steps = self.iterations.iter().filter(|r| r.inner_iterations > 0).count();
        if steps == 0 {
            0.0
        } else {
            self.total_inner_iterations() as f64 / steps as f64
        }
    }
}
