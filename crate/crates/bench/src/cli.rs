//! Command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use triccati::inexact::{InexactNewtonConfig, StepRule};
use triccati::riccati_dense::{LineSearch, DEFAULT_FIXED_POINT_MAX_ITER, DEFAULT_NEWTON_MAX_ITER};

use crate::generators::DEFAULT_GAMMA;
use crate::problem::{write_manifest, Family, ProblemSpec};
use crate::run::{emit_inner_history, emit_report, run_experiment, DenseConfig, Format, RunReport, RunStatus, SolverConfig};
use crate::suites::{cells, Suite, SuiteOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "triccati", version, about = "Solve nonsymmetric T-Riccati equations and run the benchmark suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a generated problem as Matrix Market files plus a manifest.
    Generate {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, value_enum, default_value_t = Mode::Dense)]
        mode: Mode,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Dense fixed point or Newton iteration.
    SolveDense {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, value_enum, default_value_t = Method::Newton)]
        method: Method,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Inexact Newton with low-rank iterates and an extended Krylov inner solver.
    SolveLowrank {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run a benchmark suite; every run writes its own report.
    Bench {
        #[arg(value_enum)]
        suite: SuiteArg,
        /// Problem sizes (comma separated); defaults to the suite's sizes.
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        /// With --q, restrict low-rank suites to this single (p, q).
        #[arg(long, requires = "q")]
        p: Option<usize>,
        #[arg(long, requires = "p")]
        q: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        sign_consistency: Option<bool>,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    Ex1,
    Ex2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Dense,
    Lowrank,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Newton,
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LineSearchArg {
    None,
    Exact,
    Inexact,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteArg {
    Table1,
    Table2,
    Table3,
    Table4,
    Fig1,
    Fig2,
}

#[derive(Debug, Args)]
struct ProblemArgs {
    #[arg(long, value_enum, required_unless_present = "problem", conflicts_with = "problem")]
    family: Option<FamilyArg>,
    #[arg(long, required_unless_present = "problem")]
    n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    p: usize,
    #[arg(long, default_value_t = 1)]
    q: usize,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sign-adjust B and C so that B ≥ 0, C ≤ 0 (default: on for low-rank, off for dense).
    #[arg(long)]
    sign_consistency: Option<bool>,
    /// Manifest (JSON) naming Matrix Market files.
    #[arg(long)]
    problem: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Relative residual tolerance (default 1e-12 dense, 1e-6 low-rank).
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    /// Krylov steps per inner solve.
    #[arg(long)]
    max_inner: Option<usize>,
    #[arg(long)]
    eta_bar: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Dense: none or exact. Low-rank: none (unit steps), exact (over (0, 2]) or inexact (over (0, θ_k]).
    #[arg(long, value_enum)]
    line_search: Option<LineSearchArg>,
    #[arg(long)]
    trunc_tol: Option<f64>,
}

#[derive(Debug, Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

struct Usage(String);

/// Print a line, ignoring a closed stdout.
fn say(line: impl std::fmt::Display) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{line}");
}

impl ProblemArgs {
    fn spec(&self, lowrank: bool) -> ProblemSpec {
        if let Some(path) = &self.problem {
            return ProblemSpec::from_file(path.clone());
        }
        let family = match (self.family.expect("required by clap"), lowrank) {
            (FamilyArg::Ex1, false) => Family::Ex1Dense,
            (FamilyArg::Ex1, true) => Family::Ex1LowRank,
            (FamilyArg::Ex2, false) => Family::Ex2Dense,
            (FamilyArg::Ex2, true) => Family::Ex2LowRank,
        };
        let mut s = ProblemSpec::new(family, self.n.expect("required by clap")).with_seed(self.seed).with_gamma(self.gamma);
        if lowrank {
            (s.p, s.q) = (self.p, self.q);
        }
        if let Some(sc) = self.sign_consistency {
            s.sign_consistency = sc;
        }
        s
    }
}

impl SolverArgs {
    fn dense(&self, fixed_point: bool) -> Result<SolverConfig, Usage> {
        if self.max_inner.is_some() || self.eta_bar.is_some() || self.alpha.is_some() || self.trunc_tol.is_some() {
            return Err(Usage("--max-inner, --eta-bar, --alpha and --trunc-tol apply to the low-rank solver".into()));
        }
        let line_search = match self.line_search {
            None | Some(LineSearchArg::None) => LineSearch::Off,
            Some(LineSearchArg::Exact) => LineSearch::Exact,
            Some(LineSearchArg::Inexact) => {
                return Err(Usage("--line-search inexact applies to solve-lowrank; dense Newton takes none or exact".into()))
            }
        };
        let tol = self.tol.unwrap_or(1e-12);
        if fixed_point {
            if line_search == LineSearch::Exact {
                return Err(Usage("the fixed point iteration has no line search".into()));
            }
            let max_iter = self.max_outer.unwrap_or(DEFAULT_FIXED_POINT_MAX_ITER);
            return Ok(SolverConfig::FixedPoint { tol, max_iter });
        }
        let max_iter = self.max_outer.unwrap_or(DEFAULT_NEWTON_MAX_ITER);
        Ok(SolverConfig::Newton(DenseConfig { tol, max_iter, line_search }))
    }

    fn lowrank(&self) -> Result<InexactNewtonConfig, Usage> {
        let mut c = InexactNewtonConfig::default();
        c.eps = self.tol.unwrap_or(c.eps);
        c.max_outer = self.max_outer.unwrap_or(c.max_outer);
        c.m_max = self.max_inner.unwrap_or(c.m_max);
        c.eta_bar = self.eta_bar.unwrap_or(c.eta_bar);
        c.alpha = self.alpha.unwrap_or(c.alpha);
        c.trunc_tol = self.trunc_tol.unwrap_or(c.trunc_tol);
        c.step_rule = match self.line_search {
            None | Some(LineSearchArg::Inexact) => StepRule::Capped,
            Some(LineSearchArg::Exact) => StepRule::Exact,
            Some(LineSearchArg::None) => StepRule::Unit,
        };
        c.validate().map_err(|e| Usage(e.to_string()))?;
        Ok(c)
    }
}

impl OutputArgs {
    fn format(&self) -> Format {
        match self.format {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        }
    }
}

fn summary(r: &RunReport) -> String {
    let rel = r.final_rel_res().map_or("-".to_string(), |v| format!("{v:.2e}"));
    let mut s = format!(
        "{} {} status={:?} its={} avg_inner={:.2} mem={} rank={} rel_res={} time={:.2}s",
        r.spec.stem(),
        r.solver,
        r.status,
        r.iterations,
        r.avg_inner,
        r.mem_dim,
        r.solution_rank,
        rel,
        r.wall_time_s
    );
    if let Some(e) = r.rel_error {
        s.push_str(&format!(" rel_err={e:.2e}"));
    }
    if r.status != RunStatus::Converged && !r.detail.is_empty() {
        s.push_str(&format!(" ({})", r.detail));
    }
    s
}

fn solve(spec: ProblemSpec, config: SolverConfig, output: &OutputArgs, inner_history: bool) -> Result<RunStatus, Usage> {
    spec.validate().map_err(|e| Usage(e.to_string()))?;
    let report = run_experiment(&spec, &config);
    say(summary(&report));
    let path = emit_report(&report, output.format(), &output.out).map_err(|e| Usage(e.to_string()))?;
    say(format_args!("report: {}", path.display()));
    if inner_history {
        let path = emit_inner_history(&report, &output.out).map_err(|e| Usage(e.to_string()))?;
        say(format_args!("inner history: {}", path.display()));
    }
    Ok(report.status)
}

fn dispatch(cmd: Command) -> Result<i32, Usage> {
    let code = |s: RunStatus| if s == RunStatus::Converged { EXIT_OK } else { EXIT_NOT_CONVERGED };
    match cmd {
        Command::Generate { problem, mode, out } => {
            if problem.problem.is_some() {
                return Err(Usage("generate takes --family, not --problem".into()));
            }
            let spec = problem.spec(mode == Mode::Lowrank);
            let realized = spec.realize().map_err(|e| Usage(e.to_string()))?;
            let path = write_manifest(&realized, &out).map_err(|e| Usage(e.to_string()))?;
            say(format_args!("manifest: {}", path.display()));
            Ok(EXIT_OK)
        }
        Command::SolveDense { problem, method, solver, output } => {
            let config = solver.dense(matches!(method, Method::FixedPoint))?;
            Ok(code(solve(problem.spec(false), config, &output, false)?))
        }
        Command::SolveLowrank { problem, solver, output } => {
            let config = SolverConfig::inexact(solver.lowrank()?);
            Ok(code(solve(problem.spec(true), config, &output, true)?))
        }
        Command::Bench { suite, n, p, q, gamma, seed, sign_consistency, solver, output } => {
            let suite = match suite {
                SuiteArg::Table1 => Suite::Table1,
                SuiteArg::Table2 => Suite::Table2,
                SuiteArg::Table3 => Suite::Table3,
                SuiteArg::Table4 => Suite::Table4,
                SuiteArg::Fig1 => Suite::Fig1,
                SuiteArg::Fig2 => Suite::Fig2,
            };
            if solver.line_search.is_some() {
                return Err(Usage("bench suites fix the line search; use solve-dense or solve-lowrank".into()));
            }
            let mut opts = SuiteOptions {
                sizes: n,
                ranks: p.zip(q).map(|pq| vec![pq]),
                seed,
                gamma,
                sign_consistency,
                ..Default::default()
            };
            if suite.is_lowrank() {
                opts.lowrank = solver.lowrank()?;
            } else if let SolverConfig::Newton(d) = solver.dense(false)? {
                opts.dense = d;
            }
            let mut worst = EXIT_OK;
            for (spec, config) in cells(suite, &opts) {
                let status = solve(spec, config, &output, suite.wants_inner_history())?;
                worst = worst.max(code(status));
            }
            Ok(worst)
        }
    }
}

/// Parse `args` (program name first) and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["triccati", "solve-dense", "--family", "ex2"]), EXIT_USAGE);
        assert_eq!(run(["triccati", "solve-dense", "--family", "ex1", "--n", "10"]), EXIT_USAGE);
        assert_eq!(
            run(["triccati", "solve-dense", "--family", "ex2", "--n", "4", "--line-search", "inexact"]),
            EXIT_USAGE
        );
        assert_eq!(run(["triccati", "solve-lowrank", "--family", "ex2", "--n", "4", "--eta-bar", "1.5"]), EXIT_USAGE);
        assert_eq!(run(["triccati", "bench", "table9"]), EXIT_USAGE);
        assert_eq!(run(["triccati", "--help"]), EXIT_OK);
    }
}
