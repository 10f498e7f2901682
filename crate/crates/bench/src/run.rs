//! Experiment runner and JSON/CSV reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize};

use triccati::inexact::{solve_inexact_newton, InexactNewtonConfig, StepRule};
use triccati::report::{SolveReport, SolveStatus};
use triccati::riccati_dense::{
    solve_fixed_point, solve_newton, SignAudit, LineSearch, DEFAULT_FIXED_POINT_MAX_ITER,
    DEFAULT_NEWTON_MAX_ITER,
};
use triccati::{Error, Result};

use crate::problem::{Problem, ProblemSpec};

/// Dense solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub line_search: LineSearch,
}

impl Default for DenseConfig {
    fn default() -> Self {
        DenseConfig { tol: 1e-12, max_iter: DEFAULT_NEWTON_MAX_ITER, line_search: LineSearch::Off }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SolverConfig {
    FixedPoint { tol: f64, max_iter: usize },
    Newton(DenseConfig),
    InexactNewton(InexactNewtonConfig),
}

impl SolverConfig {
    pub fn fixed_point(tol: f64) -> Self {
        SolverConfig::FixedPoint { tol, max_iter: DEFAULT_FIXED_POINT_MAX_ITER }
    }

    pub fn newton(line_search: LineSearch) -> Self {
        SolverConfig::Newton(DenseConfig { line_search, ..Default::default() })
    }

    pub fn inexact(cfg: InexactNewtonConfig) -> Self {
        SolverConfig::InexactNewton(cfg)
    }

    pub fn identifier(&self) -> &'static str {
        match self {
            SolverConfig::FixedPoint { .. } => "fixed_point",
            SolverConfig::Newton(c) if c.line_search == LineSearch::Exact => "newton_exact_ls",
            SolverConfig::Newton(_) => "newton",
            SolverConfig::InexactNewton(c) => match c.step_rule {
                StepRule::Capped => "inexact_newton",
                StepRule::Exact => "inexact_newton_exact_ls",
                StepRule::Unit => "inexact_newton_unit_step",
            },
        }
    }

    fn is_dense(&self) -> bool {
        !matches!(self, SolverConfig::InexactNewton(_))
    }
}

/// Outcome of a run: a solver status, or an error that stopped it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIterations,
    InnerSolveFailed,
    Diverged,
    Error,
}

impl From<SolveStatus> for RunStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Converged => RunStatus::Converged,
            SolveStatus::MaxIterations => RunStatus::MaxIterations,
            SolveStatus::InnerSolveFailed => RunStatus::InnerSolveFailed,
            SolveStatus::Diverged => RunStatus::Diverged,
        }
    }
}

impl RunStatus {
    /// Process exit code: 0 converged, 2 otherwise.
    pub fn exit_code(self) -> i32 {
        if self == RunStatus::Converged {
            0
        } else {
            2
        }
    }
}

/// Non-finite values are written as `null` by serde_json; read them back as NaN.
fn nan_if_null<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    #[serde(deserialize_with = "nan_if_null")]
    pub res: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub rel_res: f64,
    pub lambda: Option<f64>,
    pub inner_its: usize,
    pub rank: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inner_residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub spec: ProblemSpec,
    pub solver: String,
    pub config: SolverConfig,
    pub trace: Vec<TraceRow>,
    pub status: RunStatus,
    #[serde(deserialize_with = "nan_if_null")]
    pub wall_time_s: f64,
    pub mem_dim: usize,
    pub solution_rank: usize,
    pub detail: String,
    /// Outer iterations with a step.
    pub iterations: usize,
    pub avg_inner: f64,
    #[serde(default)]
    pub min_lambda: Option<f64>,
    /// `‖X − X_exact‖_F / ‖X_exact‖_F` when a manufactured solution is known.
    #[serde(default)]
    pub rel_error: Option<f64>,
    #[serde(default)]
    pub nonnegative_iterates: Option<bool>,
    #[serde(default)]
    pub audit: Option<SignAudit>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl RunReport {
    fn empty(spec: &ProblemSpec, config: &SolverConfig) -> Self {
        RunReport {
            spec: spec.clone(),
            solver: config.identifier().to_string(),
            config: config.clone(),
            trace: Vec::new(),
            status: RunStatus::Error,
            wall_time_s: 0.0,
            mem_dim: 0,
            solution_rank: 0,
            detail: String::new(),
            iterations: 0,
            avg_inner: 0.0,
            min_lambda: None,
            rel_error: None,
            nonnegative_iterates: None,
            audit: None,
            metadata: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn final_rel_res(&self) -> Option<f64> {
        self.trace.last().map(|r| r.rel_res)
    }

    /// Inner residual history of the last outer step that ran an inner solve.
    pub fn last_inner_history(&self) -> Option<(usize, &[f64])> {
        self.trace.iter().rev().find(|r| !r.inner_residuals.is_empty()).map(|r| (r.k, r.inner_residuals.as_slice()))
    }

    fn absorb(&mut self, rep: &SolveReport) {
        self.trace = rep
            .iterations
            .iter()
            .map(|r| TraceRow {
                k: r.k,
                res: r.residual_norm,
                rel_res: r.relative_residual,
                lambda: r.step_size,
                inner_its: r.inner_iterations,
                rank: r.iterate_rank,
                theta: r.theta,
                inner_residuals: r.inner_residuals.clone(),
            })
            .collect();
        self.status = rep.status.into();
        self.detail = rep.detail.clone();
        self.mem_dim = rep.max_basis_dim;
        self.iterations = rep.steps();
        self.avg_inner = rep.average_inner_iterations();
        self.min_lambda = rep.min_step_size;
        self.nonnegative_iterates = rep.nonnegative_iterates;
        self.warnings.extend(rep.warnings.iter().cloned());
    }
}

/// Realize `spec` and solve it. Every failure ends up in the report's status.
pub fn run_experiment(spec: &ProblemSpec, config: &SolverConfig) -> RunReport {
    let started = Instant::now();
    let mut report = RunReport::empty(spec, config);
    if let Err(e) = run_into(spec, config, &mut report) {
        report.status = RunStatus::Error;
        report.detail = e.to_string();
    }
    report.wall_time_s = started.elapsed().as_secs_f64();
    report
}

fn run_into(spec: &ProblemSpec, config: &SolverConfig, report: &mut RunReport) -> Result<()> {
    let problem = spec.realize()?;
    if matches!(spec.family, crate::problem::Family::Ex1Dense | crate::problem::Family::Ex1LowRank) {
        report.metadata.insert("convection".into(), "centered differences".into());
    }
    report.metadata.insert("order".into(), problem.n().to_string());
    report.audit = problem.audit().cloned();
    match (&problem, config) {
        (Problem::Dense { prob, x_exact, .. }, c) if c.is_dense() => {
            let (x, rep) = match c {
                SolverConfig::FixedPoint { tol, max_iter } => solve_fixed_point(prob, *tol, *max_iter)?,
                SolverConfig::Newton(d) => solve_newton(prob, d.tol, d.max_iter, d.line_search)?,
                SolverConfig::InexactNewton(_) => unreachable!(),
            };
            report.absorb(&rep);
            report.solution_rank = prob.n();
            report.rel_error = x_exact.as_ref().map(|xe| (&x - xe).norm() / xe.norm());
        }
        (Problem::LowRank { prob, .. }, SolverConfig::InexactNewton(cfg)) => {
            let (x, rep) = solve_inexact_newton(prob, cfg)?;
            report.absorb(&rep);
            report.solution_rank = x.rank();
        }
        (Problem::Dense { .. }, _) => {
            return Err(Error::InvalidConfig("dense problem needs a dense solver".into()));
        }
        (Problem::LowRank { .. }, _) => {
            return Err(Error::InvalidConfig("low-rank problem needs the inexact Newton solver".into()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    family: &'a str,
    n: usize,
    p: usize,
    q: usize,
    seed: u64,
    solver: &'a str,
    k: usize,
    res: f64,
    rel_res: f64,
    lambda: Option<f64>,
    inner_its: usize,
    rank: usize,
}

#[derive(Serialize)]
struct InnerRow {
    k: usize,
    m: usize,
    inner_res: f64,
    threshold: Option<f64>,
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn report_stem(report: &RunReport) -> String {
    format!("{}_{}", report.spec.stem(), report.solver)
}

/// Write `report` into `dir` as `<stem>.json` or `<stem>.csv` (one row per
/// trace entry); returns the file path.
pub fn emit_report(report: &RunReport, format: Format, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let stem = report_stem(report);
    match format {
        Format::Json => {
            let path = dir.join(format!("{stem}.json"));
            let text = serde_json::to_string_pretty(report).map_err(|e| Error::Io(e.into()))?;
            fs::write(&path, text)?;
            Ok(path)
        }
        Format::Csv => {
            let path = dir.join(format!("{stem}.csv"));
            let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
            for r in &report.trace {
                w.serialize(CsvRow {
                    family: report.spec.family.name(),
                    n: report.spec.n,
                    p: report.spec.p,
                    q: report.spec.q,
                    seed: report.spec.seed,
                    solver: &report.solver,
                    k: r.k,
                    res: r.res,
                    rel_res: r.rel_res,
                    lambda: r.lambda,
                    inner_its: r.inner_its,
                    rank: r.rank,
                })
                .map_err(csv_err)?;
            }
            w.flush()?;
            Ok(path)
        }
    }
}

/// Inner residual history of every outer step as CSV rows `(k, m, inner_res,
/// threshold)`, `threshold = η_k‖R(X_k)‖_F`.
pub fn emit_inner_history(report: &RunReport, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}_inner.csv", report_stem(report)));
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    let cfg = match &report.config {
        SolverConfig::InexactNewton(c) => Some(c),
        _ => None,
    };
    for r in &report.trace {
        for (m, &v) in r.inner_residuals.iter().enumerate() {
            let threshold = cfg.map(|c| c.eta(r.k) * r.res);
            w.serialize(InnerRow { k: r.k, m: m + 1, inner_res: v, threshold }).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(path)
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Io(e.into()))
}
