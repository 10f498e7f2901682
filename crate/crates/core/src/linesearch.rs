//! The quartic residual model along a Newton direction and its minimization.
//!
//! With `L` the residual of the (inexact) Newton step equation and `S` the
//! step, `R(X + λS) = (1 − λ) R(X) + λ L − λ² SᵀBS`, hence
//!
//! ```text
//! p(λ) = ‖R(X + λS)‖²_F
//!      = (1−λ)²α + λ²β + λ⁴δ + 2λ(1−λ)γ − 2λ²(1−λ)ε − 2λ³ξ.
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchPoly {
    /// `‖R‖²`
    pub alpha: f64,
    /// `‖L‖²`
    pub beta: f64,
    /// `⟨R, L⟩`
    pub gamma: f64,
    /// `‖SᵀBS‖²`
    pub delta: f64,
    /// `⟨R, SᵀBS⟩`
    pub epsilon: f64,
    /// `⟨L, SᵀBS⟩`
    pub xi: f64,
}

impl LineSearchPoly {
    /// Monomial coefficients `[c0, c1, c2, c3, c4]`.
    pub fn monomial(&self) -> [f64; 5] {
        let LineSearchPoly {
            alpha: a,
            beta: b,
            gamma: g,
            delta: d,
            epsilon: e,
            xi: x,
        } = *self;
        [a, 2.0 * (g - a), a + b - 2.0 * g - 2.0 * e, 2.0 * (e - x), d]
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        let (l, m) = (lambda, 1.0 - lambda);
        m * m * self.alpha + l * l * self.beta + l.powi(4) * self.delta + 2.0 * l * m * self.gamma
            - 2.0 * l * l * m * self.epsilon
            - 2.0 * l.powi(3) * self.xi
    }

    pub fn derivative(&self, lambda: f64) -> f64 {
        let c = self.monomial();
        ((4.0 * c[4] * lambda + 3.0 * c[3]) * lambda + 2.0 * c[2]) * lambda + c[1]
    }
}

fn inner(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Coefficients from dense `R(X_k)`, `L_{k+1}` and `S_kᵀ B S_k`.
pub fn line_search_poly(r: &DenseMatrix, l: &DenseMatrix, sbs: &DenseMatrix) -> Result<LineSearchPoly> {
    if r.shape() != l.shape() || r.shape() != sbs.shape() {
        return Err(shape_err(format!(
            "line search: R {:?}, L {:?}, SᵀBS {:?}",
            r.shape(),
            l.shape(),
            sbs.shape()
        )));
    }
    Ok(LineSearchPoly {
        alpha: r.norm_squared(),
        beta: l.norm_squared(),
        gamma: inner(r, l),
        delta: sbs.norm_squared(),
        epsilon: inner(r, sbs),
        xi: inner(l, sbs),
    })
}

/// Real roots of `c0 + c1 x + c2 x² + c3 x³`.
fn cubic_roots(c0: f64, c1: f64, c2: f64, c3: f64) -> Vec<f64> {
    let scale = c0.abs().max(c1.abs()).max(c2.abs()).max(c3.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    let eps = 1e-14 * scale;
    if c3.abs() <= eps {
        if c2.abs() <= eps {
            if c1.abs() <= eps {
                return Vec::new();
            }
            return vec![-c0 / c1];
        }
        // Quadratic, in the cancellation-free form.
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if disc < 0.0 {
            return Vec::new();
        }
        let q = -0.5 * (c1 + c1.signum() * disc.sqrt());
        let mut roots = vec![q / c2];
        if q != 0.0 {
            roots.push(c0 / q);
        }
        return roots;
    }
    // Depressed cubic t³ + p t + q with x = t − b/3.
    let (b, c, d) = (c2 / c3, c1 / c3, c0 / c3);
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let shift = -b / 3.0;
    let disc = q * q / 4.0 + p * p * p / 27.0;
    if disc > 0.0 {
        let s = disc.sqrt();
        let u = (-q / 2.0 + s).cbrt();
        let v = (-q / 2.0 - s).cbrt();
        vec![u + v + shift]
    } else if p == 0.0 {
        vec![shift]
    } else {
        // Three real roots (trigonometric form).
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|k| m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() + shift)
            .collect()
    }
}

/// `argmin_{λ ∈ (0, end]} p(λ)`: stationary points of `p` in the interval
/// compared against the endpoint, ties going to the smallest `λ`.
///
/// The minimum is attained when `p′(0) < 0`, which holds for every step
/// with `‖L‖ < ‖R‖`.
pub fn minimize_quartic(poly: &LineSearchPoly, interval_end: f64) -> f64 {
    let c = poly.monomial();
    let mut cands: Vec<f64> = cubic_roots(c[1], 2.0 * c[2], 3.0 * c[3], 4.0 * c[4])
        .into_iter()
        .map(|r| polish(poly, r))
        .filter(|&r| r.is_finite() && r > 0.0 && r < interval_end)
        .collect();
    cands.push(interval_end);
    cands.sort_by(|a, b| a.total_cmp(b));

    let scale = poly.alpha.abs().max(f64::MIN_POSITIVE);
    let mut best = cands[0];
    let mut best_val = poly.eval(best);
    for &l in &cands[1..] {
        let v = poly.eval(l);
        if v < best_val - 1e-15 * scale {
            best = l;
            best_val = v;
        }
    }
    best
}

fn polish(poly: &LineSearchPoly, mut x: f64) -> f64 {
    let c = poly.monomial();
    for _ in 0..4 {
        let d1 = poly.derivative(x);
        let d2 = (12.0 * c[4] * x + 6.0 * c[3]) * x + 2.0 * c[2];
        if d2 == 0.0 {
            break;
        }
        let nx = x - d1 / d2;
        if !nx.is_finite() || (nx - x).abs() > 0.1 * (1.0 + x.abs()) {
            break;
        }
        x = nx;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    fn scalar_step() -> LineSearchPoly {
        // d=2, a=1, b=1, c=−1 from x0 = 0: S = 1/3, R = −1, L = 0.
        let r = dmatrix![-1.0];
        let s = 1.0 / 3.0;
        line_search_poly(&r, &dmatrix![0.0], &dmatrix![s * s]).unwrap()
    }

    #[test]
    fn scalar_coefficients() {
        let p = scalar_step();
        assert_eq!((p.alpha, p.beta, p.gamma, p.xi), (1.0, 0.0, 0.0, 0.0));
        assert_relative_eq!(p.delta, 1.0 / 81.0, epsilon = 1e-16);
        assert_relative_eq!(p.epsilon, -1.0 / 9.0, epsilon = 1e-16);
        assert_relative_eq!(p.eval(1.0), 1.0 / 81.0, epsilon = 1e-16);
        assert_eq!(p.eval(0.0), p.alpha);
    }

    #[test]
    fn matches_scalar_residual_along_the_step() {
        let p = scalar_step();
        for i in 0..=40 {
            let l = i as f64 / 20.0;
            let x = l / 3.0;
            let res = 2.0 * x + x - x * x - 1.0;
            assert_relative_eq!(p.eval(l), res * res, epsilon = 1e-14);
        }
    }

    #[test]
    fn linear_problem_minimizer_is_one() {
        let p = line_search_poly(&dmatrix![3.0, -1.0], &dmatrix![0.0, 0.0], &dmatrix![0.0, 0.0]).unwrap();
        assert_eq!(minimize_quartic(&p, 2.0), 1.0);
        let p = LineSearchPoly { alpha: 1.0, beta: 0.0, gamma: 0.0, delta: 0.0, epsilon: 0.0, xi: 0.0 };
        assert_eq!(minimize_quartic(&p, 2.0), 1.0);
        assert_eq!(minimize_quartic(&p, 0.5), 0.5);
    }

    #[test]
    fn scalar_minimizer_beats_fine_grid() {
        let p = scalar_step();
        let l = minimize_quartic(&p, 2.0);
        let grid_min = (1..=1_000_000)
            .map(|i| p.eval(2.0 * i as f64 / 1e6))
            .fold(f64::INFINITY, f64::min);
        assert!(p.eval(l) <= grid_min + 1e-16);
        assert!(l > 1.0 && l < 2.0);
        assert!(p.derivative(l).abs() < 1e-12);
    }

    #[test]
    fn cubic_roots_cases() {
        let mut r = cubic_roots(-6.0, 11.0, -6.0, 1.0); // (x−1)(x−2)(x−3)
        r.sort_by(|a, b| a.total_cmp(b));
        for (got, want) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
        assert_relative_eq!(cubic_roots(-8.0, 0.0, 0.0, 1.0)[0], 2.0, epsilon = 1e-14);
        let mut q = cubic_roots(2.0, -3.0, 1.0, 0.0);
        q.sort_by(|a, b| a.total_cmp(b));
        assert_eq!(q, vec![1.0, 2.0]);
        assert_eq!(cubic_roots(1.0, 0.0, 1.0, 0.0), Vec::<f64>::new());
    }

    proptest! {
        #[test]
        fn descent_for_valid_inexact_steps(
            a in 0.1f64..10.0, eta in 0.0f64..0.95, cos in -1.0f64..1.0,
            d in 0.0f64..5.0, e in -5.0f64..5.0, x in -5.0f64..5.0, end in 0.05f64..2.0,
        ) {
            // ‖L‖ ≤ η‖R‖ so γ = ⟨R,L⟩ ≤ η α and p′(0) < 0.
            let beta = (eta * eta) * a;
            let p = LineSearchPoly { alpha: a, beta, gamma: cos * eta * a, delta: d, epsilon: e, xi: x };
            let l = minimize_quartic(&p, end);
            prop_assert!(l > 0.0 && l <= end);
            prop_assert!(p.eval(l) < p.alpha);
        }

        #[test]
        fn minimizer_is_global_on_interval(
            c in proptest::array::uniform5(-3.0f64..3.0), end in 0.1f64..2.0,
        ) {
            // γ < α keeps p′(0) < 0, so the infimum over (0, end] is attained.
            let alpha = c[0].abs() + 0.01;
            let p = LineSearchPoly { alpha, beta: c[1].abs(), gamma: alpha - 0.01 - c[2].abs(), delta: c[3].abs(), epsilon: c[4], xi: c[1] };
            let l = minimize_quartic(&p, end);
            let grid_min = (1..=20_000).map(|i| p.eval(end * i as f64 / 20_000.0)).fold(f64::INFINITY, f64::min);
            prop_assert!(p.eval(l) <= grid_min + 1e-12 * (1.0 + grid_min.abs()));
        }
    }
}
