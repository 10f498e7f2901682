//! Inexact Newton-Kleinman iteration on factored iterates, with the
//! quartic line search restricted to `(0, θ_k]`.
//!
//! Every iterate is kept as `X_k = P₁P₂ᵀ`; the residual, the step residual
//! `L_{k+1}` and `S_kᵀBS_k` are only ever formed as factor pairs, and the
//! line-search coefficients come from their orthonormal-core forms.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::krylov::{solve_tsylv_krylov_with, BlockRecurrence, InnerStatus, KrylovOptions, DEFAULT_M_MAX};
use crate::linesearch::{minimize_quartic, LineSearchPoly};
use crate::lowrank::{
    lr_combine, lr_riccati_residual, lr_sbs, lr_step_and_lresidual, lr_truncate, Compressed, LowRankPair,
    LowRankTRiccatiProblem, DEFAULT_TRUNC_TOL,
};
use crate::report::{IterationRecord, SolveReport, SolveStatus};

/// Relative slack on the sufficient decrease test.
pub const DECREASE_SLACK: f64 = 1e-10;
/// Entries below this count as negative in [`nonnegativity_monitor`].
pub const NONNEGATIVITY_TOL: f64 = -1e-8;
/// Orders up to this are checked entry by entry.
pub const DENSE_MONITOR_MAX_N: usize = 200;
/// Step halvings tried before a step is rejected.
pub const MAX_HALVINGS: usize = 5;

/// Forcing terms `η_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum EtaSchedule {
    /// `η_k = min(η̄, 1/(1 + k³))`
    InverseCubic,
    /// `η_k = η` for all `k`.
    Constant(f64),
}

/// How `λ_k` is chosen before the sufficient decrease safeguard.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Minimize the residual polynomial over `(0, θ_k]`.
    #[default]
    Capped,
    /// Minimize the residual polynomial over `(0, 2]`.
    Exact,
    /// `λ_k = 1`.
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InexactNewtonConfig {
    /// Stop when `‖R(X_k)‖_F < eps·‖C‖_F`.
    pub eps: f64,
    pub eta_bar: f64,
    /// Sufficient decrease parameter.
    pub alpha: f64,
    pub eta_schedule: EtaSchedule,
    pub max_outer: usize,
    /// Krylov steps per inner solve.
    pub m_max: usize,
    pub trunc_tol: f64,
    /// Krylov block recurrence of the inner solver.
    #[serde(default)]
    pub recurrence: BlockRecurrence,
    #[serde(default)]
    pub step_rule: StepRule,
    /// Hard cap on the iterate rank; `None` means `4(p+q)·m_max`.
    pub max_rank: Option<usize>,
    /// Reject problems whose factors are not sign consistent
    /// (`B₁, B₂ ≥ 0` and `C₁, C₂` of opposite signs).
    pub force_sign_consistency: bool,
    /// Entries sampled by the nonnegativity monitor above the dense-check order.
    pub monitor_samples: usize,
    pub seed: u64,
}

impl Default for InexactNewtonConfig {
    fn default() -> Self {
        InexactNewtonConfig {
            eps: 1e-6,
            eta_bar: 0.5,
            alpha: 1e-4,
            eta_schedule: EtaSchedule::InverseCubic,
            max_outer: 30,
            m_max: DEFAULT_M_MAX,
            trunc_tol: DEFAULT_TRUNC_TOL,
            recurrence: BlockRecurrence::WholeBlock,
            step_rule: StepRule::Capped,
            max_rank: None,
            force_sign_consistency: false,
            monitor_samples: 1000,
            seed: 0,
        }
    }
}

impl InexactNewtonConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.eta_bar > 0.0 && self.eta_bar < 1.0) {
            return bad(format!("eta_bar must lie in (0, 1), got {}", self.eta_bar));
        }
        if !(self.alpha > 0.0 && self.alpha + self.eta_bar < 1.0) {
            return bad(format!("alpha must lie in (0, 1 - eta_bar), got {}", self.alpha));
        }
        if let EtaSchedule::Constant(eta) = self.eta_schedule {
            if !(eta > 0.0 && eta <= self.eta_bar) {
                return bad(format!("constant eta {eta} outside (0, eta_bar]"));
            }
        }
        if self.m_max == 0 {
            return bad("m_max must be positive".into());
        }
        if !(self.trunc_tol >= 0.0) {
            return bad(format!("trunc_tol must be nonnegative, got {}", self.trunc_tol));
        }
        Ok(())
    }

    pub fn eta(&self, k: usize) -> f64 {
        match self.eta_schedule {
            EtaSchedule::InverseCubic => self.eta_bar.min(1.0 / (1.0 + (k as f64).powi(3))),
            EtaSchedule::Constant(eta) => eta,
        }
    }

    pub fn rank_cap(&self, prob: &LowRankTRiccatiProblem) -> usize {
        self.max_rank.unwrap_or(4 * (prob.p() + prob.q()) * self.m_max)
    }
}

/// `θ_k = min{1, (1 − α − η̄)·√(α_k/δ_k)}`, and 1 when `δ_k = 0` or `α_k = 0`.
pub fn compute_theta(alpha_k: f64, delta_k: f64, cfg: &InexactNewtonConfig) -> f64 {
    if delta_k <= 0.0 || alpha_k <= 0.0 {
        return 1.0;
    }
    ((1.0 - cfg.alpha - cfg.eta_bar) * (alpha_k / delta_k).sqrt()).min(1.0)
}

/// `res_new ≤ (1 − λα)·res_old`, up to a relative slack of `1e−10`.
pub fn decrease_condition_check(res_old: f64, res_new: f64, lambda: f64, alpha: f64) -> bool {
    res_new <= (1.0 - lambda * alpha) * res_old * (1.0 + DECREASE_SLACK)
}

/// Are all entries of `X` at least `−1e−8`? Every entry is checked for
/// `n ≤ 200`, otherwise `sample` entries drawn with the given seed.
pub fn nonnegativity_monitor(x: &LowRankPair, sample: usize, seed: u64) -> bool {
    let n = x.n();
    if x.rank() == 0 || n == 0 {
        return true;
    }
    if n <= DENSE_MONITOR_MAX_N {
        return x.to_dense().iter().all(|&v| v >= NONNEGATIVITY_TOL);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..sample).all(|_| {
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        x.entry(i, j) >= NONNEGATIVITY_TOL
    })
}

/// Line-search coefficients from factored `R(X_k)`, `L_{k+1}` and `S_kᵀBS_k`.
pub fn lr_line_search_poly(r: &Compressed, l: &Compressed, sbs: &Compressed) -> LineSearchPoly {
    LineSearchPoly {
        alpha: r.norm().powi(2),
        beta: l.norm().powi(2),
        gamma: r.inner(l),
        delta: sbs.norm().powi(2),
        epsilon: r.inner(sbs),
        xi: l.inner(sbs),
    }
}

fn sign_consistent(prob: &LowRankTRiccatiProblem) -> bool {
    let nonneg = |m: &crate::DenseMatrix| m.iter().all(|&v| v >= 0.0);
    let nonpos = |m: &crate::DenseMatrix| m.iter().all(|&v| v <= 0.0);
    nonneg(&prob.b1)
        && nonneg(&prob.b2)
        && ((nonneg(prob.c1t()) && nonpos(prob.c2t())) || (nonpos(prob.c1t()) && nonneg(prob.c2t())))
}

/// Inexact Newton-Kleinman iteration from `X₀ = 0`.
///
/// Solver failures are reported through the returned [`SolveReport`]
/// (`InnerSolveFailed`, `MaxIterations`, `Diverged`) together with the last
/// accepted iterate; `Err` is reserved for invalid input.
pub fn solve_inexact_newton(
    prob: &LowRankTRiccatiProblem,
    cfg: &InexactNewtonConfig,
) -> Result<(LowRankPair, SolveReport)> {
    solve_inexact_newton_observed(prob, cfg, |_| {})
}

/// As [`solve_inexact_newton`], calling `observe` on every accepted iterate including `X₀`.
pub fn solve_inexact_newton_observed(
    prob: &LowRankTRiccatiProblem,
    cfg: &InexactNewtonConfig,
    mut observe: impl FnMut(&LowRankPair),
) -> Result<(LowRankPair, SolveReport)> {
    cfg.validate()?;
    if cfg.force_sign_consistency && !sign_consistent(prob) {
        return Err(Error::InvalidConfig(
            "factors are not sign consistent (need B1, B2 >= 0 and C1, C2 of opposite signs)".into(),
        ));
    }
    let started = Instant::now();
    let n = prob.n();
    let rank_cap = cfg.rank_cap(prob);
    let c_norm = Compressed::new(&prob.c_pair()).norm();
    let mut report = SolveReport::new();
    let mut nonneg = true;

    let mut x = LowRankPair::zeros(n);
    observe(&x);
    let mut r = Compressed::new(&lr_riccati_residual(prob, &x)?);

    for k in 0.. {
        let res = r.norm();
        report.iterations.push(IterationRecord::new(k, res, c_norm, x.rank()));
        if !res.is_finite() {
            report.finish(SolveStatus::Diverged, "non-finite residual", started);
            break;
        }
        if res < cfg.eps * c_norm || res == 0.0 {
            report.finish(SolveStatus::Converged, format!("converged after {k} iterations"), started);
            break;
        }
        if k >= cfg.max_outer {
            let msg = format!("no convergence in {} outer iterations", cfg.max_outer);
            report.finish(SolveStatus::MaxIterations, msg, started);
            break;
        }

        let eta = cfg.eta(k);
        let opts = KrylovOptions { m_max: cfg.m_max, trunc_tol: cfg.trunc_tol, recurrence: cfg.recurrence };
        let (x_tilde, inner) = solve_tsylv_krylov_with(prob, &x, eta * res, &opts)?;
        report.max_basis_dim = report.max_basis_dim.max(inner.basis_dim);
        let rec = report.iterations.last_mut().expect("pushed above");
        rec.inner_iterations = inner.iterations();
        rec.inner_residuals = inner.residuals.clone();
        if !inner.status.is_success() {
            let msg = format!("inner solve at outer step {k} ({:?}): {}", inner.status, inner.detail);
            report.finish(SolveStatus::InnerSolveFailed, msg, started);
            break;
        }
        if inner.status == InnerStatus::Invariant && inner.final_residual().is_some_and(|v| v > eta * res) {
            report.warnings.push(format!("outer step {k}: invariant Krylov space above the inner tolerance"));
        }

        let (s, l) = lr_step_and_lresidual(prob, &x, &x_tilde)?;
        let sbs = Compressed::new(&lr_sbs(prob, &s)?);
        let l = Compressed::new(&l);
        let poly = lr_line_search_poly(&r, &l, &sbs);
        let theta = compute_theta(poly.alpha, poly.delta, cfg);
        let mut lambda = match cfg.step_rule {
            StepRule::Capped => minimize_quartic(&poly, theta),
            StepRule::Exact => minimize_quartic(&poly, 2.0),
            StepRule::Unit => 1.0,
        };

        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let x_new = lr_truncate(&lr_combine(&x, &x_tilde, lambda)?, cfg.trunc_tol, usize::MAX)?;
            let r_new = Compressed::new(&lr_riccati_residual(prob, &x_new)?);
            if decrease_condition_check(res, r_new.norm(), lambda, cfg.alpha) {
                accepted = Some((x_new, r_new));
                break;
            }
            lambda *= 0.5;
        }
        let rec = report.iterations.last_mut().expect("pushed above");
        rec.theta = Some(theta);
        let Some((x_new, r_new)) = accepted else {
            let msg = format!("outer step {k}: no step size satisfies the decrease condition after {MAX_HALVINGS} halvings");
            report.finish(SolveStatus::Diverged, msg, started);
            break;
        };
        rec.step_size = Some(lambda);
        if x_new.rank() > rank_cap {
            let msg = format!("outer step {k}: iterate rank {} exceeds the cap {rank_cap}", x_new.rank());
            report.finish(SolveStatus::Diverged, msg, started);
            break;
        }
        x = x_new;
        r = r_new;
        nonneg &= nonnegativity_monitor(&x, cfg.monitor_samples, cfg.seed.wrapping_add(k as u64));
        observe(&x);
    }
    report.nonnegative_iterates = Some(nonneg);
    if let Some(last) = report.iterations.last_mut() {
        last.iterate_rank = x.rank();
    }
    Ok((x, report))
}
