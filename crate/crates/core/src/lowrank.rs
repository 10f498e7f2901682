//! Factored matrices `M = P₁ P₂ᵀ` and the factored forms of the residual,
//! the Newton step and the step residual.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{shape_err, Error, Result};
use crate::operator::{OperatorRef, Transposed};
use crate::svd::{singular_values, svd};
use crate::DenseMatrix;

/// Default relative singular-value cutoff for truncation.
pub const DEFAULT_TRUNC_TOL: f64 = 1e-12;

/// `M = P1 P2ᵀ` with `P1`, `P2` both `n × t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankPair {
    pub p1: DenseMatrix,
    pub p2: DenseMatrix,
}

impl LowRankPair {
    pub fn new(p1: DenseMatrix, p2: DenseMatrix) -> Result<Self> {
        if p1.shape() != p2.shape() {
            return Err(shape_err(format!("factor shapes {:?} and {:?}", p1.shape(), p2.shape())));
        }
        Ok(LowRankPair { p1, p2 })
    }

    pub fn zeros(n: usize) -> Self {
        LowRankPair {
            p1: DMatrix::zeros(n, 0),
            p2: DMatrix::zeros(n, 0),
        }
    }

    pub fn n(&self) -> usize {
        self.p1.nrows()
    }

    /// Number of factor columns.
    pub fn rank(&self) -> usize {
        self.p1.ncols()
    }

    /// `P1 P2ᵀ`; allocates `n × n`.
    pub fn to_dense(&self) -> DenseMatrix {
        &self.p1 * self.p2.transpose()
    }

    /// Entry `(i, j)` of the represented matrix.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.p1.row(i).dot(&self.p2.row(j))
    }

    pub fn transpose(&self) -> LowRankPair {
        LowRankPair {
            p1: self.p2.clone(),
            p2: self.p1.clone(),
        }
    }
}

pub(crate) fn hcat(blocks: &[&DenseMatrix]) -> DenseMatrix {
    let n = blocks.first().map_or(0, |b| b.nrows());
    let w: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, w);
    let mut c = 0;
    for b in blocks {
        out.columns_mut(c, b.ncols()).copy_from(b);
        c += b.ncols();
    }
    out
}

/// `[A, B]` pairs concatenated: the sum of the represented matrices.
pub fn lr_sum(terms: &[&LowRankPair]) -> Result<LowRankPair> {
    let n = terms.first().map_or(0, |t| t.n());
    if terms.iter().any(|t| t.n() != n) {
        return Err(shape_err("summands of different order"));
    }
    let p1: Vec<&DenseMatrix> = terms.iter().map(|t| &t.p1).collect();
    let p2: Vec<&DenseMatrix> = terms.iter().map(|t| &t.p2).collect();
    Ok(LowRankPair {
        p1: hcat(&p1),
        p2: hcat(&p2),
    })
}

/// `‖P1 P2ᵀ‖_F = sqrt(trace((P1ᵀP1)(P2ᵀP2)))` from the `t × t` Gram matrices.
///
/// Loses relative accuracy when the product is much smaller than its
/// factors; [`Compressed::norm`] avoids that.
pub fn lr_frobenius_norm(m: &LowRankPair) -> f64 {
    let g1 = m.p1.tr_mul(&m.p1);
    let g2 = m.p2.tr_mul(&m.p2);
    g1.component_mul(&g2).sum().max(0.0).sqrt()
}

/// `⟨M, N⟩_F = trace((N1ᵀM1)(M2ᵀN2))`.
pub fn lr_inner_product(m: &LowRankPair, n: &LowRankPair) -> Result<f64> {
    if m.n() != n.n() {
        return Err(shape_err(format!("inner product of orders {} and {}", m.n(), n.n())));
    }
    let g1 = n.p1.tr_mul(&m.p1);
    let g2 = n.p2.tr_mul(&m.p2);
    Ok(g1.component_mul(&g2).sum())
}

/// Orthonormal-core form `M = Q1 · core · Q2ᵀ` of a factored matrix.
#[derive(Debug, Clone)]
pub struct Compressed {
    pub q1: DenseMatrix,
    pub core: DenseMatrix,
    pub q2: DenseMatrix,
}

pub(crate) fn thin_qr(p: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let (n, t) = p.shape();
    if t == 0 || n == 0 {
        return (DMatrix::zeros(n, 0), DMatrix::zeros(0, t));
    }
    let qr = p.clone().qr();
    (qr.q(), qr.r())
}

impl Compressed {
    pub fn new(m: &LowRankPair) -> Self {
        let (q1, r1) = thin_qr(&m.p1);
        let (q2, r2) = thin_qr(&m.p2);
        let core = r1 * r2.transpose();
        Compressed { q1, core, q2 }
    }

    pub fn norm(&self) -> f64 {
        self.core.norm()
    }

    /// `⟨self, other⟩_F`.
    pub fn inner(&self, other: &Compressed) -> f64 {
        let a = other.q1.tr_mul(&self.q1);
        let b = self.q2.tr_mul(&other.q2);
        // trace(Cₒᵀ a C b)
        (a * &self.core * b).component_mul(&other.core).sum()
    }
}

/// Truncation of `M` to `M′` with `‖M − M′‖_F ≤ tol·‖M‖_F`, at most `max_rank` columns.
///
/// Returns the truncated pair and the discarded tail `‖M − M′‖_F`.
pub fn lr_truncate_with_tail(m: &LowRankPair, tol: f64, max_rank: usize) -> Result<(LowRankPair, f64)> {
    let n = m.n();
    if m.rank() == 0 {
        return Ok((LowRankPair::zeros(n), 0.0));
    }
    let (q1, r1) = thin_qr(&m.p1);
    let (q2, r2) = thin_qr(&m.p2);
    let (l, r, tail) = split_core(&(r1 * r2.transpose()), tol, max_rank)?;
    Ok((LowRankPair { p1: q1 * l, p2: q2 * r }, tail))
}

/// `core ≈ L Rᵀ` from the truncated SVD, with `√σ` on both sides. Returns `(L, R, tail)`.
pub(crate) fn split_core(core: &DenseMatrix, tol: f64, max_rank: usize) -> Result<(DenseMatrix, DenseMatrix, f64)> {
    let (k1, k2) = core.shape();
    let empty = || (DMatrix::zeros(k1, 0), DMatrix::zeros(k2, 0), 0.0);
    if k1 == 0 || k2 == 0 {
        return Ok(empty());
    }
    let f = svd(core)?;
    let sig = &f.s;
    let smax = sig[0];
    if smax == 0.0 {
        return Ok(empty());
    }
    let total = sig.iter().map(|s| s * s).sum::<f64>().sqrt();
    let tol_eff = tol.max(sig.len() as f64 * f64::EPSILON);

    // Keep every σ above tol·σ_max, and enough to bring the tail under tol·‖M‖.
    let r_rel = sig.iter().filter(|&&s| s > tol_eff * smax).count();
    let mut tail2 = 0.0;
    let mut r_tail = sig.len();
    while r_tail > 0 {
        let s = sig[r_tail - 1];
        if (tail2 + s * s).sqrt() > tol_eff * total {
            break;
        }
        tail2 += s * s;
        r_tail -= 1;
    }
    let r = r_rel.max(r_tail).min(max_rank);
    let tail = sig[r..].iter().map(|s| s * s).sum::<f64>().sqrt();

    let mut l = f.u.columns(0, r).into_owned();
    let mut rr = f.vt.rows(0, r).transpose();
    for c in 0..r {
        let w = sig[c].sqrt();
        l.column_mut(c).scale_mut(w);
        rr.column_mut(c).scale_mut(w);
    }
    Ok((l, rr, tail))
}

pub fn lr_truncate(m: &LowRankPair, tol: f64, max_rank: usize) -> Result<LowRankPair> {
    Ok(lr_truncate_with_tail(m, tol, max_rank)?.0)
}

/// `(A − M Nᵀ)⁻¹` through solves with `A`, with the capacitance matrix
/// `I − Nᵀ A⁻¹ M` factored once.
#[derive(Debug)]
pub struct SmwSolver {
    op: OperatorRef,
    m: DenseMatrix,
    n: DenseMatrix,
    ainv_m: DenseMatrix,
    cap: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

/// Capacitance matrices with reciprocal condition below this are rejected.
pub const SMW_RCOND_THRESHOLD: f64 = 1e-14;

impl SmwSolver {
    pub fn new(op: OperatorRef, m: DenseMatrix, n: DenseMatrix) -> Result<Self> {
        let dim = op.dim();
        if m.nrows() != dim || n.shape() != m.shape() {
            return Err(shape_err(format!(
                "SMW update M {:?}, N {:?} for order {dim}",
                m.shape(),
                n.shape()
            )));
        }
        let r = m.ncols();
        let ainv_m = op.solve(&m)?;
        let cap = DMatrix::identity(r, r) - n.tr_mul(&ainv_m);
        if r > 0 {
            let sv = singular_values(&cap)?;
            let smax = sv[0];
            let smin = sv[sv.len() - 1];
            let rcond = if smax > 0.0 { smin / smax } else { 0.0 };
            if !(rcond >= SMW_RCOND_THRESHOLD) {
                return Err(Error::Singular(format!(
                    "SMW capacitance matrix (reciprocal condition {rcond:.3e})"
                )));
            }
        }
        Ok(SmwSolver {
            op,
            m,
            n,
            ainv_m,
            cap: cap.lu(),
        })
    }

    /// `(A − M Nᵀ)⁻¹ Y`
    pub fn solve(&self, y: &DenseMatrix) -> Result<DenseMatrix> {
        let mut z = self.op.solve(y)?;
        if self.m.ncols() > 0 {
            let t = self.n.tr_mul(&z);
            let w = self
                .cap
                .solve(&t)
                .ok_or_else(|| Error::Singular("SMW capacitance matrix".into()))?;
            z.gemm(1.0, &self.ainv_m, &w, 1.0);
        }
        Ok(z)
    }

    /// `(A − M Nᵀ) X`
    pub fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let mut y = self.op.apply(x)?;
        if self.m.ncols() > 0 {
            let t = self.n.tr_mul(x);
            y.gemm(-1.0, &self.m, &t, 1.0);
        }
        Ok(y)
    }
}

/// `Z = (A − M Nᵀ)⁻¹ Y`.
pub fn smw_solve(op: &OperatorRef, m: &DenseMatrix, n: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
    SmwSolver::new(Arc::clone(op), m.clone(), n.clone())?.solve(y)
}

/// `D X + Xᵀ A − Xᵀ B₁ B₂ᵀ X + C₁ᵀ C₂ = 0` with operator `A`, `D` and
/// factored `B = B₁B₂ᵀ` (`n × p` factors), `C = C₁ᵀC₂` (`q × n` factors).
#[derive(Debug, Clone)]
pub struct LowRankTRiccatiProblem {
    pub a: OperatorRef,
    pub d: OperatorRef,
    pub b1: DenseMatrix,
    pub b2: DenseMatrix,
    c1t: DenseMatrix,
    c2t: DenseMatrix,
}

impl LowRankTRiccatiProblem {
    /// `c1`, `c2` are `q × n`; the constant term is `c1ᵀ c2`.
    pub fn new(
        a: OperatorRef,
        d: OperatorRef,
        b1: DenseMatrix,
        b2: DenseMatrix,
        c1: DenseMatrix,
        c2: DenseMatrix,
    ) -> Result<Self> {
        let n = a.dim();
        if d.dim() != n {
            return Err(shape_err(format!("A of order {n}, D of order {}", d.dim())));
        }
        if b1.nrows() != n || b1.shape() != b2.shape() {
            return Err(shape_err(format!("B1 {:?}, B2 {:?}, expected n = {n} rows", b1.shape(), b2.shape())));
        }
        if c1.ncols() != n || c1.shape() != c2.shape() {
            return Err(shape_err(format!("C1 {:?}, C2 {:?}, expected q x {n}", c1.shape(), c2.shape())));
        }
        Ok(LowRankTRiccatiProblem {
            a,
            d,
            b1,
            b2,
            c1t: c1.transpose(),
            c2t: c2.transpose(),
        })
    }

    pub fn n(&self) -> usize {
        self.a.dim()
    }

    pub fn p(&self) -> usize {
        self.b1.ncols()
    }

    pub fn q(&self) -> usize {
        self.c1t.ncols()
    }

    /// `C₁ᵀ` (`n × q`).
    pub fn c1t(&self) -> &DenseMatrix {
        &self.c1t
    }

    /// `C₂ᵀ` (`n × q`).
    pub fn c2t(&self) -> &DenseMatrix {
        &self.c2t
    }

    /// `C = C₁ᵀC₂` as a factored pair.
    pub fn c_pair(&self) -> LowRankPair {
        LowRankPair {
            p1: self.c1t.clone(),
            p2: self.c2t.clone(),
        }
    }

    fn check(&self, x: &LowRankPair) -> Result<()> {
        if x.n() != self.n() {
            return Err(shape_err(format!("iterate of order {}, problem of order {}", x.n(), self.n())));
        }
        Ok(())
    }

    /// Shifted coefficients at `X = P1 P2ᵀ`:
    /// `D − XᵀB = D − U_D B₂ᵀ` and `A − BX = A − B₁ U_Aᵀ`,
    /// with `U_D = P2 (P1ᵀB₁)`, `U_A = P2 (P1ᵀB₂)`.
    pub fn shifts(&self, x: &LowRankPair) -> Result<(DenseMatrix, DenseMatrix)> {
        self.check(x)?;
        let alpha = x.p1.tr_mul(&self.b1);
        let beta = x.p1.tr_mul(&self.b2);
        Ok((&x.p2 * alpha, &x.p2 * beta))
    }

    /// Solvers for the shifted operators `D̂ = D − U_D B₂ᵀ` and
    /// `Âᵀ = Aᵀ − U_A B₁ᵀ` at iterate `x`.
    pub fn shifted_operators(&self, x: &LowRankPair) -> Result<ShiftedOperators> {
        let (u_d, u_a) = self.shifts(x)?;
        let d_hat = SmwSolver::new(Arc::clone(&self.d), u_d.clone(), self.b2.clone())?;
        let at: OperatorRef = Arc::new(Transposed(Arc::clone(&self.a)));
        let a_hat_t = SmwSolver::new(at, u_a.clone(), self.b1.clone())?;
        Ok(ShiftedOperators { d_hat, a_hat_t, u_d, u_a })
    }

    /// Dense coefficients `(A, B, C, D)`; allocates `n × n` and is meant for desk-scale checks.
    pub fn to_dense(&self) -> (DenseMatrix, DenseMatrix, DenseMatrix, DenseMatrix) {
        (
            self.a.to_dense(),
            &self.b1 * self.b2.transpose(),
            &self.c1t * self.c2t.transpose(),
            self.d.to_dense(),
        )
    }
}

/// The shifted operators of one Newton step.
#[derive(Debug)]
pub struct ShiftedOperators {
    /// `D − U_D B₂ᵀ`
    pub d_hat: SmwSolver,
    /// `Aᵀ − U_A B₁ᵀ`
    pub a_hat_t: SmwSolver,
    pub u_d: DenseMatrix,
    pub u_a: DenseMatrix,
}

/// `R(X) = [D P1, P2, −P2 α, C₁ᵀ] [P2, Aᵀ P1, P2 β, C₂ᵀ]ᵀ` with `α = P1ᵀB₁`, `β = P1ᵀB₂`.
pub fn lr_riccati_residual(prob: &LowRankTRiccatiProblem, x: &LowRankPair) -> Result<LowRankPair> {
    prob.check(x)?;
    let (u_d, u_a) = prob.shifts(x)?;
    let dp1 = prob.d.apply(&x.p1)?;
    let atp1 = prob.a.apply_transpose(&x.p1)?;
    let left = hcat(&[&dp1, &x.p2, &(-u_d), &prob.c1t]);
    let right = hcat(&[&x.p2, &atp1, &u_a, &prob.c2t]);
    LowRankPair::new(left, right)
}

/// Step `S = X̃ − X` and step residual
/// `L = D X̃ + X̃ᵀA − XᵀBX̃ − X̃ᵀBX + XᵀBX + C`, both factored.
///
/// `L = [D P̃1 − P2 α β̃ᵀ, P̃2, P2 α, C₁ᵀ] [P̃2, Aᵀ P̃1 − P2 β α̃ᵀ, P2 β, C₂ᵀ]ᵀ`
/// with `α̃ = P̃1ᵀB₁`, `β̃ = P̃1ᵀB₂`.
pub fn lr_step_and_lresidual(
    prob: &LowRankTRiccatiProblem,
    x: &LowRankPair,
    x_tilde: &LowRankPair,
) -> Result<(LowRankPair, LowRankPair)> {
    prob.check(x)?;
    prob.check(x_tilde)?;
    let s = LowRankPair::new(hcat(&[&x_tilde.p1, &(-&x.p1)]), hcat(&[&x_tilde.p2, &x.p2]))?;

    let (u_d, u_a) = prob.shifts(x)?;
    let alpha_t = x_tilde.p1.tr_mul(&prob.b1);
    let beta_t = x_tilde.p1.tr_mul(&prob.b2);
    let mut first = prob.d.apply(&x_tilde.p1)?;
    first.gemm(-1.0, &u_d, &beta_t.transpose(), 1.0);
    let mut second = prob.a.apply_transpose(&x_tilde.p1)?;
    second.gemm(-1.0, &u_a, &alpha_t.transpose(), 1.0);
    let left = hcat(&[&first, &x_tilde.p2, &u_d, &prob.c1t]);
    let right = hcat(&[&x_tilde.p2, &second, &u_a, &prob.c2t]);
    Ok((s, LowRankPair::new(left, right)?))
}

/// `Sᵀ B S = [V (UᵀB₁)] [V (UᵀB₂)]ᵀ` for `S = U Vᵀ`.
pub fn lr_sbs(prob: &LowRankTRiccatiProblem, s: &LowRankPair) -> Result<LowRankPair> {
    prob.check(s)?;
    let left = &s.p2 * s.p1.tr_mul(&prob.b1);
    let right = &s.p2 * s.p1.tr_mul(&prob.b2);
    LowRankPair::new(left, right)
}

/// `X + λ (X̃ − X) = [(1−λ) P1, λ P̃1] [P2, P̃2]ᵀ`.
pub fn lr_combine(x: &LowRankPair, x_tilde: &LowRankPair, lambda: f64) -> Result<LowRankPair> {
    if x.n() != x_tilde.n() {
        return Err(shape_err("combining iterates of different order"));
    }
    LowRankPair::new(
        hcat(&[&(&x.p1 * (1.0 - lambda)), &(&x_tilde.p1 * lambda)]),
        hcat(&[&x.p2, &x_tilde.p2]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{DenseOperator, SparseOperator};
    use crate::sparse::CsrMatrix;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(n: usize, m: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        DMatrix::from_fn(n, m, |_, _| rng.random::<f64>() - 0.5)
    }

    fn rand_pair(n: usize, t: usize, rng: &mut ChaCha8Rng) -> LowRankPair {
        LowRankPair::new(rand_mat(n, t, rng), rand_mat(n, t, rng)).unwrap()
    }

    fn desk_problem(n: usize, p: usize, q: usize, seed: u64) -> LowRankTRiccatiProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_mat(n, n, &mut rng) + DMatrix::identity(n, n) * 3.0;
        let d = rand_mat(n, n, &mut rng) + DMatrix::identity(n, n) * 4.0;
        LowRankTRiccatiProblem::new(
            Arc::new(DenseOperator::new(a).unwrap()),
            Arc::new(DenseOperator::new(d).unwrap()),
            rand_mat(n, p, &mut rng),
            rand_mat(n, p, &mut rng),
            rand_mat(q, n, &mut rng),
            rand_mat(q, n, &mut rng),
        )
        .unwrap()
    }

    fn dense_residual(prob: &LowRankTRiccatiProblem, x: &DenseMatrix) -> DenseMatrix {
        let (a, b, c, d) = prob.to_dense();
        &d * x + x.transpose() * &a - x.transpose() * &b * x + c
    }

    #[test]
    fn norm_examples() {
        let mut e1 = DMatrix::zeros(3, 1);
        e1[0] = 1.0;
        let m = LowRankPair::new(e1.clone(), e1).unwrap();
        assert_relative_eq!(lr_frobenius_norm(&m), 1.0);
        let c = LowRankPair::new(dmatrix![1.0; 2.0], dmatrix![3.0; 4.0]).unwrap();
        assert_relative_eq!(lr_frobenius_norm(&c), 125f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(Compressed::new(&c).norm(), 125f64.sqrt(), epsilon = 1e-14);
        assert_eq!(lr_frobenius_norm(&LowRankPair::zeros(4)), 0.0);
    }

    #[test]
    fn norms_and_inner_products_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = rand_pair(500, 7, &mut rng);
        let dn = m.to_dense().norm();
        assert_relative_eq!(lr_frobenius_norm(&m), dn, max_relative = 1e-12);
        assert_relative_eq!(Compressed::new(&m).norm(), dn, max_relative = 1e-12);

        let m = rand_pair(300, 4, &mut rng);
        let n = rand_pair(300, 6, &mut rng);
        let dense = m.to_dense().component_mul(&n.to_dense()).sum();
        assert_relative_eq!(lr_inner_product(&m, &n).unwrap(), dense, max_relative = 1e-12);
        assert_relative_eq!(Compressed::new(&m).inner(&Compressed::new(&n)), dense, max_relative = 1e-12);
        assert_relative_eq!(lr_inner_product(&m, &m).unwrap(), lr_frobenius_norm(&m).powi(2), max_relative = 1e-13);
        assert!(lr_inner_product(&m, &rand_pair(5, 1, &mut rng)).is_err());
    }

    #[test]
    fn orthogonal_supports_have_zero_inner_product() {
        let mut a = DMatrix::zeros(4, 1);
        a[0] = 1.0;
        let mut b = DMatrix::zeros(4, 1);
        b[1] = 1.0;
        let m = LowRankPair::new(a.clone(), a).unwrap();
        let n = LowRankPair::new(b.clone(), b).unwrap();
        assert_eq!(lr_inner_product(&m, &n).unwrap(), 0.0);
    }

    #[test]
    fn compressed_norm_survives_cancellation() {
        // M = P P2ᵀ − P (P2 + δ)ᵀ = −P δᵀ with large factors.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = rand_mat(200, 3, &mut rng) * 1e4;
        let p2 = rand_mat(200, 3, &mut rng);
        let delta = rand_mat(200, 3, &mut rng) * 1e-9;
        let m = LowRankPair::new(hcat(&[&p, &(-&p)]), hcat(&[&p2, &(&p2 + &delta)])).unwrap();
        let exact = (&p * delta.transpose()).norm();
        assert_relative_eq!(Compressed::new(&m).norm(), exact, max_relative = 1e-6);
    }

    #[test]
    fn truncate_removes_redundancy() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = rand_mat(50, 1, &mut rng);
        let v = rand_mat(50, 1, &mut rng);
        let coeffs = [1.0, -2.0, 0.5, 3.0, 0.25];
        let p1 = DMatrix::from_fn(50, 5, |i, k| u[i] * coeffs[k]);
        let p2 = DMatrix::from_fn(50, 5, |i, _| v[i]);
        let m = LowRankPair::new(p1, p2).unwrap();
        let t = lr_truncate(&m, 0.0, usize::MAX).unwrap();
        assert_eq!(t.rank(), 1);
        assert!((t.to_dense() - m.to_dense()).norm() <= 1e-13 * m.to_dense().norm());
        assert_eq!(lr_truncate(&LowRankPair::zeros(5), 1e-8, 3).unwrap().rank(), 0);
    }

    #[test]
    fn truncate_keeps_singular_values_above_cutoff() {
        let n = 200;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (q1, _) = thin_qr(&rand_mat(n, 17, &mut rng));
        let (q2, _) = thin_qr(&rand_mat(n, 17, &mut rng));
        let sig: Vec<f64> = (0..17).map(|i| 10f64.powi(-i)).collect();
        let p1 = DMatrix::from_fn(n, 17, |i, k| q1[(i, k)] * sig[k]);
        let m = LowRankPair::new(p1, q2).unwrap();
        let t = lr_truncate(&m, 3e-8, usize::MAX).unwrap();
        let dense_sv = singular_values(&m.to_dense()).unwrap();
        let expected = dense_sv.iter().filter(|&&s| s >= 3e-8 * dense_sv[0]).count();
        assert_eq!(t.rank(), expected);
        let err = (t.to_dense() - m.to_dense()).norm();
        assert!(err <= 3e-8 * m.to_dense().norm());
        assert_eq!(lr_truncate(&m, 1e-8, 3).unwrap().rank(), 3);
    }

    #[test]
    fn smw_examples() {
        let a: OperatorRef = Arc::new(DenseOperator::new(DMatrix::identity(2, 2) * 2.0).unwrap());
        let e1 = dmatrix![1.0; 0.0];
        let z = smw_solve(&a, &e1, &e1, &dmatrix![1.0; 1.0]).unwrap();
        assert_relative_eq!(z, dmatrix![1.0; 0.5], epsilon = 1e-15);
        let zero = DMatrix::zeros(2, 1);
        let z = smw_solve(&a, &zero, &zero, &dmatrix![1.0; 1.0]).unwrap();
        assert_relative_eq!(z, dmatrix![0.5; 0.5], epsilon = 1e-15);
        // A − MNᵀ singular: diag(2,2) − 2 e1 e1ᵀ.
        assert!(smw_solve(&a, &(&e1 * 2.0), &e1, &dmatrix![1.0; 1.0]).is_err());
    }

    #[test]
    fn smw_on_sparse_matrix() {
        let n = 1000;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut t: Vec<_> = (0..n).map(|i| (i, i, 4.0)).collect();
        for _ in 0..3 * n {
            t.push((rng.random_range(0..n), rng.random_range(0..n), rng.random::<f64>() - 0.5));
        }
        let csr = CsrMatrix::from_triplets(n, n, &t).unwrap();
        let a: OperatorRef = Arc::new(SparseOperator::new(csr).unwrap());
        let m = rand_mat(n, 3, &mut rng) * 0.1;
        let nn = rand_mat(n, 3, &mut rng) * 0.1;
        let y = rand_mat(n, 2, &mut rng);
        let z = smw_solve(&a, &m, &nn, &y).unwrap();
        let resid = a.apply(&z).unwrap() - &m * nn.tr_mul(&z) - &y;
        assert!(resid.norm() <= 1e-10 * y.norm());
    }

    #[test]
    fn residual_examples() {
        let prob = desk_problem(50, 2, 3, 5);
        let r0 = lr_riccati_residual(&prob, &LowRankPair::zeros(50)).unwrap();
        assert_eq!(r0.rank(), 2 + 3);
        assert_relative_eq!(r0.to_dense(), prob.c_pair().to_dense(), epsilon = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = rand_pair(50, 4, &mut rng);
        let r = lr_riccati_residual(&prob, &x).unwrap();
        assert_eq!(r.rank(), 2 * 4 + 2 + 3);
        let dense = dense_residual(&prob, &x.to_dense());
        assert_relative_eq!(lr_frobenius_norm(&r), dense.norm(), max_relative = 1e-11);
    }

    #[test]
    fn scalar_residual_matches_dense_module() {
        let one = |v: f64| dmatrix![v];
        let prob = LowRankTRiccatiProblem::new(
            Arc::new(DenseOperator::new(one(1.0)).unwrap()),
            Arc::new(DenseOperator::new(one(2.0)).unwrap()),
            one(1.0),
            one(1.0),
            one(-1.0),
            one(1.0),
        )
        .unwrap();
        let x = LowRankPair::new(one(1.0 / 3.0), one(1.0)).unwrap();
        let r = lr_riccati_residual(&prob, &x).unwrap().to_dense();
        let dp = crate::riccati_dense::TRiccatiProblem::unchecked(one(1.0), one(1.0), one(-1.0), one(2.0)).unwrap();
        let rd = crate::riccati_dense::residual(&dp, &one(1.0 / 3.0)).unwrap();
        assert_relative_eq!(r, rd, epsilon = 1e-15);
    }

    #[test]
    fn step_of_identical_iterates_is_zero() {
        let prob = desk_problem(20, 1, 1, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = rand_pair(20, 3, &mut rng);
        let (s, _) = lr_step_and_lresidual(&prob, &x, &x).unwrap();
        assert!(Compressed::new(&s).norm() <= 1e-14 * x.to_dense().norm());
    }

    #[test]
    fn exact_step_has_tiny_lresidual() {
        let prob = desk_problem(30, 2, 2, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = rand_pair(30, 2, &mut rng);
        let x = LowRankPair::new(x.p1 * 0.1, x.p2).unwrap();
        let (a, b, c, d) = prob.to_dense();
        let xd = x.to_dense();
        let rhs = -(xd.transpose() * &b * &xd) - &c;
        let sol = crate::tsylv::solve_tsylv_shifted(&d, &a, &(xd.transpose() * &b), &(&b * &xd), &rhs).unwrap();
        let xt = LowRankPair::new(sol.x.clone(), DMatrix::identity(30, 30)).unwrap();
        let (_, l) = lr_step_and_lresidual(&prob, &x, &xt).unwrap();
        let r = lr_riccati_residual(&prob, &x).unwrap();
        assert!(Compressed::new(&l).norm() <= 1e-10 * Compressed::new(&r).norm());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn factored_forms_match_dense(n in 2usize..=40, t in 1usize..=4, tt in 1usize..=4, seed in any::<u64>()) {
            let prob = desk_problem(n, 1 + (seed % 3) as usize, 1 + (seed % 2) as usize, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
            let x = rand_pair(n, t, &mut rng);
            let xt = rand_pair(n, tt, &mut rng);
            let (a, b, c, d) = prob.to_dense();
            let (xd, xtd) = (x.to_dense(), xt.to_dense());
            let (s, l) = lr_step_and_lresidual(&prob, &x, &xt).unwrap();
            let s_dense = &xtd - &xd;
            prop_assert!((s.to_dense() - &s_dense).norm() <= 1e-11 * (1.0 + s_dense.norm()));
            let l_dense = (&d - xd.transpose() * &b) * &xtd + xtd.transpose() * (&a - &b * &xd)
                + xd.transpose() * &b * &xd + &c;
            prop_assert!((l.to_dense() - &l_dense).norm() <= 1e-11 * (1.0 + l_dense.norm()));
            let sbs = lr_sbs(&prob, &s).unwrap();
            let sbs_dense = s_dense.transpose() * &b * &s_dense;
            prop_assert!((sbs.to_dense() - &sbs_dense).norm() <= 1e-11 * (1.0 + sbs_dense.norm()));
            let lam = 0.3;
            let comb = lr_combine(&x, &xt, lam).unwrap();
            prop_assert!((comb.to_dense() - (&xd + &s_dense * lam)).norm() <= 1e-12 * (1.0 + xd.norm()));
        }

        #[test]
        fn truncation_is_contractive(n in 5usize..=60, t in 1usize..=8, tol in 0.0f64..1e-2, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = rand_pair(n, t, &mut rng);
            let (tr, tail) = lr_truncate_with_tail(&m, tol, usize::MAX).unwrap();
            let md = m.to_dense();
            prop_assert!(tr.rank() <= m.rank());
            let err = (tr.to_dense() - &md).norm();
            prop_assert!(err <= tol.max(1e-14) * md.norm() + 1e-13 * md.norm());
            prop_assert!((err - tail).abs() <= 1e-10 * md.norm());
            prop_assert!(tr.to_dense().norm() <= md.norm() * (1.0 + 1e-12));
        }

        #[test]
        fn smw_matches_dense_solve(n in 2usize..=80, r in 1usize..=3, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = rand_mat(n, n, &mut rng) + DMatrix::identity(n, n) * 4.0;
            let m = rand_mat(n, r, &mut rng) * 0.2;
            let nn = rand_mat(n, r, &mut rng) * 0.2;
            let y = rand_mat(n, 2, &mut rng);
            let op: OperatorRef = Arc::new(DenseOperator::new(a.clone()).unwrap());
            if let Ok(z) = smw_solve(&op, &m, &nn, &y) {
                let want = (&a - &m * nn.transpose()).lu().solve(&y).unwrap();
                prop_assert!((&z - &want).norm() <= 1e-9 * want.norm());
            }
        }
    }
}
