//! Dense solvers: fixed-point iteration and Newton's method with optional
//! exact line search.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{classify_m_matrix, tsylv_kron_matrix};
use crate::error::{shape_err, Result};
use crate::linesearch::{line_search_poly, minimize_quartic};
use crate::report::{IterationRecord, SolveReport, SolveStatus};
use crate::tsylv::{TSylvEquation, TSylvFactor};
use crate::DenseMatrix;

/// Orders up to which the M-matrix condition is checked through the Kronecker matrix.
const KRON_CHECK_MAX: usize = 12;
/// Orders beyond which the sign and M-matrix audit is skipped.
pub const AUDIT_MAX_ORDER: usize = 200;

pub const DEFAULT_NEWTON_MAX_ITER: usize = 50;
pub const DEFAULT_FIXED_POINT_MAX_ITER: usize = 10_000;

/// Outcome of checking `B ≥ 0`, `C ≤ 0` and the M-matrix condition on `(D, A)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignAudit {
    pub b_nonnegative: bool,
    pub c_nonpositive: bool,
    /// `None` when the check was skipped.
    pub m_matrix: Option<bool>,
}

impl SignAudit {
    pub fn holds(&self) -> bool {
        self.b_nonnegative && self.c_nonpositive && self.m_matrix == Some(true)
    }
}

/// Is `X ↦ DX + XᵀA` a nonsingular M-matrix under `vec`?
///
/// Small orders classify the Kronecker matrix; larger ones check the
/// Z-pattern and the certificate `V = S⁻¹(1)`, `V ≥ 0`, `S(V) > 0`.
pub fn tsylv_is_m_matrix(d: &DenseMatrix, a: &DenseMatrix) -> Result<bool> {
    let n = d.nrows();
    if n <= KRON_CHECK_MAX {
        let k = tsylv_kron_matrix(d, a)?;
        let tol = 1e-14 * k.norm();
        return Ok(classify_m_matrix(&k, tol).is_nonsingular_m_matrix);
    }
    let tol = 1e-14 * (d.norm() + a.norm());
    // Every entry of A lands off the diagonal of the Kronecker matrix for n ≥ 2.
    let z = (0..n).all(|j| (0..n).all(|i| (i == j || d[(i, j)] <= tol) && a[(i, j)] <= tol));
    if !z {
        return Ok(false);
    }
    let ones = DenseMatrix::from_element(n, n, 1.0);
    let v = match TSylvFactor::new(d, a).and_then(|f| f.solve(&ones)) {
        Ok((v, _)) => v,
        Err(_) => return Ok(false),
    };
    let vmax = v.amax();
    if v.iter().any(|&x| x < -1e-10 * vmax) {
        return Ok(false);
    }
    let v = v.map(|x| x.max(0.0));
    let image = d * &v + v.transpose() * a;
    Ok(image.iter().all(|&x| x > 0.0))
}

pub fn audit_signs(
    a: &DenseMatrix,
    b: &DenseMatrix,
    c: &DenseMatrix,
    d: &DenseMatrix,
) -> Result<SignAudit> {
    let n = d.nrows();
    Ok(SignAudit {
        b_nonnegative: b.iter().all(|&x| x >= 0.0),
        c_nonpositive: c.iter().all(|&x| x <= 0.0),
        m_matrix: if n <= AUDIT_MAX_ORDER {
            Some(tsylv_is_m_matrix(d, a)?)
        } else {
            None
        },
    })
}

/// `D X + Xᵀ A − Xᵀ B X + C = 0` with dense coefficients.
#[derive(Debug, Clone)]
pub struct TRiccatiProblem {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    pub c: DenseMatrix,
    pub d: DenseMatrix,
    pub audit_checked: bool,
    pub audit_holds: bool,
    pub warnings: Vec<String>,
}

impl TRiccatiProblem {
    /// Build and audit the sign and M-matrix conditions (skipped with a warning above order 200).
    pub fn new(a: DenseMatrix, b: DenseMatrix, c: DenseMatrix, d: DenseMatrix) -> Result<Self> {
        let mut p = Self::unchecked(a, b, c, d)?;
        let audit = audit_signs(&p.a, &p.b, &p.c, &p.d)?;
        p.audit_checked = audit.m_matrix.is_some();
        p.audit_holds = audit.holds();
        if !p.audit_checked {
            p.warnings.push(format!(
                "sign and M-matrix audit skipped: order {} exceeds {}",
                p.n(),
                AUDIT_MAX_ORDER
            ));
        } else if !p.audit_holds {
            p.warnings.push(format!("sign or M-matrix condition fails: {audit:?}"));
        }
        Ok(p)
    }

    /// Build without auditing.
    pub fn unchecked(a: DenseMatrix, b: DenseMatrix, c: DenseMatrix, d: DenseMatrix) -> Result<Self> {
        let n = d.nrows();
        for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if m.shape() != (n, n) {
                return Err(shape_err(format!("{name} is {:?}, expected {n}x{n}", m.shape())));
            }
        }
        Ok(TRiccatiProblem {
            a,
            b,
            c,
            d,
            audit_checked: false,
            audit_holds: false,
            warnings: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.d.nrows()
    }
}

/// `R(X) = D X + Xᵀ A − Xᵀ B X + C`.
pub fn residual(prob: &TRiccatiProblem, x: &DenseMatrix) -> Result<DenseMatrix> {
    let n = prob.n();
    if x.shape() != (n, n) {
        return Err(shape_err(format!("X is {:?}, expected {n}x{n}", x.shape())));
    }
    let xt = x.transpose();
    Ok(&prob.d * x + &xt * &prob.a - &xt * &prob.b * x + &prob.c)
}

fn start_report(prob: &TRiccatiProblem) -> SolveReport {
    let mut r = SolveReport::new();
    r.warnings = prob.warnings.clone();
    r
}

/// `D X_{k+1} + X_{k+1}ᵀ A = X_kᵀ B X_k − C` from `X_0 = 0`.
pub fn solve_fixed_point(prob: &TRiccatiProblem, tol: f64, max_iter: usize) -> Result<(DenseMatrix, SolveReport)> {
    solve_fixed_point_observed(prob, tol, max_iter, |_| {})
}

/// As [`solve_fixed_point`], calling `observe` on every iterate including `X_0`.
pub fn solve_fixed_point_observed(
    prob: &TRiccatiProblem,
    tol: f64,
    max_iter: usize,
    mut observe: impl FnMut(&DenseMatrix),
) -> Result<(DenseMatrix, SolveReport)> {
    let started = Instant::now();
    let n = prob.n();
    let c_norm = prob.c.norm();
    let mut report = start_report(prob);
    let mut x = DenseMatrix::zeros(n, n);
    observe(&x);

    let factor = match TSylvFactor::new(&prob.d, &prob.a) {
        Ok(f) => Some(f),
        Err(e) => {
            report.finish(SolveStatus::InnerSolveFailed, e.to_string(), started);
            None
        }
    };
    let Some(factor) = factor else {
        return Ok((x, report));
    };

    for k in 0.. {
        let res = residual(prob, &x)?.norm();
        report.iterations.push(IterationRecord::new(k, res, c_norm, n));
        if !res.is_finite() {
            report.finish(SolveStatus::Diverged, "non-finite residual", started);
            return Ok((x, report));
        }
        if res <= tol * c_norm {
            report.finish(SolveStatus::Converged, format!("converged after {k} iterations"), started);
            return Ok((x, report));
        }
        if k >= max_iter {
            report.finish(SolveStatus::MaxIterations, format!("no convergence in {max_iter} iterations"), started);
            return Ok((x, report));
        }
        let rhs = x.transpose() * &prob.b * &x - &prob.c;
        match factor.solve(&rhs) {
            Ok((next, _)) => x = next,
            Err(e) => {
                report.finish(SolveStatus::InnerSolveFailed, e.to_string(), started);
                return Ok((x, report));
            }
        }
        if let Some(last) = report.iterations.last_mut() {
            last.step_size = Some(1.0);
        }
        observe(&x);
    }
    unreachable!()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineSearch {
    Off,
    Exact,
}

/// Newton's method from `X_0 = 0`:
/// `(D − X_kᵀB) X̃ + X̃ᵀ (A − B X_k) = −X_kᵀ B X_k − C`, `X_{k+1} = X_k + λ_k (X̃ − X_k)`.
pub fn solve_newton(
    prob: &TRiccatiProblem,
    tol: f64,
    max_iter: usize,
    line_search: LineSearch,
) -> Result<(DenseMatrix, SolveReport)> {
    solve_newton_observed(prob, tol, max_iter, line_search, |_| {})
}

/// As [`solve_newton`], calling `observe` on every iterate including `X_0`.
pub fn solve_newton_observed(
    prob: &TRiccatiProblem,
    tol: f64,
    max_iter: usize,
    line_search: LineSearch,
    mut observe: impl FnMut(&DenseMatrix),
) -> Result<(DenseMatrix, SolveReport)> {
    let started = Instant::now();
    let n = prob.n();
    let c_norm = prob.c.norm();
    let mut report = start_report(prob);
    let mut x = DenseMatrix::zeros(n, n);
    observe(&x);

    for k in 0.. {
        let r = residual(prob, &x)?;
        let res = r.norm();
        report.iterations.push(IterationRecord::new(k, res, c_norm, n));
        if !res.is_finite() {
            report.finish(SolveStatus::Diverged, "non-finite residual", started);
            return Ok((x, report));
        }
        if res <= tol * c_norm {
            report.finish(SolveStatus::Converged, format!("converged after {k} iterations"), started);
            return Ok((x, report));
        }
        if k >= max_iter {
            report.finish(SolveStatus::MaxIterations, format!("no convergence in {max_iter} iterations"), started);
            return Ok((x, report));
        }

        let xt = x.transpose();
        let xtb = &xt * &prob.b;
        let d_hat = &prob.d - &xtb;
        let a_hat = &prob.a - &prob.b * &x;
        let rhs = -(&xtb * &x) - &prob.c;
        let eq = TSylvEquation::new(d_hat, a_hat, rhs)?;
        let x_new = match crate::tsylv::solve_tsylv_dense(&eq) {
            Ok(sol) => sol.x,
            Err(e) => {
                report.finish(SolveStatus::InnerSolveFailed, format!("Newton step {k}: {e}"), started);
                return Ok((x, report));
            }
        };

        let lambda = match line_search {
            LineSearch::Off => 1.0,
            LineSearch::Exact => {
                let s = &x_new - &x;
                let l = &eq.d * &x_new + x_new.transpose() * &eq.a - &eq.e;
                let sbs = s.transpose() * &prob.b * &s;
                let poly = line_search_poly(&r, &l, &sbs)?;
                let lam = minimize_quartic(&poly, 2.0);
                if (lam - 1.0).abs() <= 1e-8 {
                    1.0
                } else {
                    lam
                }
            }
        };
        if let Some(last) = report.iterations.last_mut() {
            last.step_size = Some(lambda);
        }
        x = if lambda == 1.0 { x_new } else { &x + (x_new - &x) * lambda };
        observe(&x);
    }
    unreachable!()
}

/// Is `x` the minimal nonnegative solution?
///
/// Checks `x ≥ 0` and `x ≤ Y`, with `Y` the fixed-point limit computed
/// independently. With `0 < trials < n²` only that many random entries are
/// compared (seeded, reproducible); otherwise all entries are.
pub fn verify_minimality(prob: &TRiccatiProblem, x: &DenseMatrix, trials: usize) -> bool {
    let n = prob.n();
    if x.shape() != (n, n) || !x.iter().all(|v| v.is_finite()) {
        return false;
    }
    let Ok((y, rep)) = solve_fixed_point(prob, 1e-14, DEFAULT_FIXED_POINT_MAX_ITER) else {
        return false;
    };
    // Stagnation at roundoff is fine as long as the limit is essentially reached.
    if !rep.status.is_converged() && rep.final_relative_residual > 1e-10 {
        return false;
    }
    let tol = 1e-8 * y.amax().max(1.0);
    let ok = |i: usize, j: usize| x[(i, j)] >= -tol && x[(i, j)] <= y[(i, j)] + tol;
    if trials == 0 || trials >= n * n {
        (0..n).all(|j| (0..n).all(|i| ok(i, j)))
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        (0..trials).all(|_| ok(rng.random_range(0..n), rng.random_range(0..n)))
    }
}
