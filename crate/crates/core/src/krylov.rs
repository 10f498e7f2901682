//! Extended Krylov projection for the shifted T-Sylvester equation
//! `D̂ X + Xᵀ Â = −F₁F₂ᵀ` of one Newton step.
//!
//! With `M = Â⁻ᵀD̂`, `V` spans `EK_m(M, Â⁻ᵀF)` and `W = orth(ÂᵀV)`. The
//! projected equation `T Y + Yᵀ K = −G₁G₂ᵀ` uses `T = WᵀD̂V`, `K = VᵀÂW`,
//! `G_i = WᵀF_i`, and the approximation is `V Y Wᵀ`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::lowrank::{hcat, split_core, thin_qr, LowRankPair, LowRankTRiccatiProblem, ShiftedOperators};
use crate::svd::svd;
use crate::tsylv::{solve_tsylv_dense, TSylvEquation};
use crate::DenseMatrix;

/// Directions whose remainder after orthogonalization falls below this
/// (relative to a unit column) are dropped.
pub const DEFLATION_TOL: f64 = 1e-12;
/// Smallest admissible `σ_min/σ_max` of a new `W` block.
pub const BREAKDOWN_TOL: f64 = 1e-12;
pub const DEFAULT_M_MAX: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerStatus {
    Converged,
    /// The space became invariant; the projected solution is exact.
    Invariant,
    MaxIterations,
    Breakdown,
    /// The projected equation could not be solved.
    ProjectedSolveFailed,
}

impl InnerStatus {
    pub fn is_success(self) -> bool {
        matches!(self, InnerStatus::Converged | InnerStatus::Invariant)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerReport {
    pub status: InnerStatus,
    pub detail: String,
    /// Requested absolute residual tolerance.
    pub tol: f64,
    /// Residual norm of the projected solution after each step.
    pub residuals: Vec<f64>,
    /// Largest basis dimension built.
    pub basis_dim: usize,
    pub solution_rank: usize,
}

impl InnerReport {
    pub fn iterations(&self) -> usize {
        self.residuals.len()
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.residuals.last().copied()
    }
}

#[derive(Debug, Clone, Copy)]
struct Block {
    start: usize,
    pos: usize,
    neg: usize,
}

impl Block {
    fn width(&self) -> usize {
        self.pos + self.neg
    }
}

/// Which part of the newest block the forward operator `M = Â⁻ᵀD̂` acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockRecurrence {
    /// `M` on the whole block, `M⁻¹` on its inverse-power part.
    #[default]
    WholeBlock,
    /// `M` on the forward part only, `M⁻¹` on the inverse-power part.
    Split,
}

/// Outcome of one basis expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expansion {
    Grew(usize),
    /// No new direction survived deflation.
    Invariant,
}

/// Bases, projected matrices and the current projected solution.
#[derive(Debug, Clone)]
pub struct KrylovState {
    v: DenseMatrix,
    w: DenseMatrix,
    t: DenseMatrix,
    k: DenseMatrix,
    g1: DenseMatrix,
    g2: DenseMatrix,
    f1: DenseMatrix,
    f2: DenseMatrix,
    blocks: Vec<Block>,
    /// `D̂` and `Âᵀ` applied to the newest `V` block.
    dv_last: DenseMatrix,
    atv_last: DenseMatrix,
    y: Option<DenseMatrix>,
    y_dim: usize,
    invariant: bool,
    recurrence: BlockRecurrence,
}

/// Columns scaled to unit norm; zero columns are removed.
fn normalize_columns(y: &DenseMatrix) -> DenseMatrix {
    let keep: Vec<DenseMatrix> = y
        .column_iter()
        .filter_map(|c| {
            let nrm = c.norm();
            (nrm > 0.0 && nrm.is_finite()).then(|| DenseMatrix::from_column_slice(c.len(), 1, (c / nrm).as_slice()))
        })
        .collect();
    let refs: Vec<&DenseMatrix> = keep.iter().collect();
    if refs.is_empty() {
        DMatrix::zeros(y.nrows(), 0)
    } else {
        hcat(&refs)
    }
}

/// Two classical Gram-Schmidt passes of `y` against orthonormal `basis`.
/// Returns the remainder and the accumulated coefficients.
fn project_out(basis: &DenseMatrix, y: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let mut z = y.clone();
    let mut h = DMatrix::zeros(basis.ncols(), y.ncols());
    if basis.ncols() == 0 {
        return (z, h);
    }
    for _ in 0..2 {
        let c = basis.tr_mul(&z);
        z.gemm(-1.0, basis, &c, 1.0);
        h += c;
    }
    (z, h)
}

/// Orthonormal basis `U` of the remainder `z = U R` (via QR then SVD), keeping
/// singular values above `tol·reference`. Returns `(U, R, σ)`.
fn reveal(z: &DenseMatrix, tol: f64, reference: f64) -> Result<(DenseMatrix, DenseMatrix, Vec<f64>)> {
    let (n, w) = z.shape();
    if w == 0 || n == 0 {
        return Ok((DMatrix::zeros(n, 0), DMatrix::zeros(0, w), Vec::new()));
    }
    let (qz, rz) = thin_qr(z);
    let f = svd(&rz)?;
    let kept = f.s.iter().take_while(|&&s| s > tol * reference).count();
    let mut r = f.vt.rows(0, kept).into_owned();
    for (c, mut row) in r.row_iter_mut().enumerate() {
        row *= f.s[c];
    }
    Ok((qz * f.u.columns(0, kept), r, f.s))
}

/// New orthonormal directions of `y` not already in `basis`, with one
/// extra orthogonalization pass for the accepted block.
fn extend_basis(basis: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
    let y = normalize_columns(y);
    let (z, _) = project_out(basis, &y);
    let (u, _, _) = reveal(&z, DEFLATION_TOL, 1.0)?;
    if u.ncols() == 0 {
        return Ok(u);
    }
    let (u2, _) = project_out(basis, &u);
    Ok(thin_qr(&u2).0)
}

fn grow(m: &DenseMatrix, rows: usize, cols: usize) -> DenseMatrix {
    let mut out = DMatrix::zeros(rows, cols);
    out.view_mut((0, 0), m.shape()).copy_from(m);
    out
}

fn vcat(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

impl KrylovState {
    /// Seed from `H = [F₁, F₂]`: `V₁ = orth[Â⁻ᵀH, D̂⁻¹H]`, `W₁ = orth(ÂᵀV₁)`.
    pub fn new(ops: &ShiftedOperators, f1: DenseMatrix, f2: DenseMatrix) -> Result<Self> {
        let n = f1.nrows();
        if f2.nrows() != n {
            return Err(shape_err(format!("rhs factors {:?}, {:?}", f1.shape(), f2.shape())));
        }
        let h = hcat(&[&f1, &f2]);
        let empty = DMatrix::zeros(n, 0);
        let hb = extend_basis(&empty, &h)?;
        if hb.ncols() == 0 {
            // Zero right-hand side: the solution is zero.
            return Ok(KrylovState {
                v: empty.clone(),
                w: empty.clone(),
                t: DMatrix::zeros(0, 0),
                k: DMatrix::zeros(0, 0),
                g1: DMatrix::zeros(0, f1.ncols()),
                g2: DMatrix::zeros(0, f2.ncols()),
                f1,
                f2,
                blocks: Vec::new(),
                dv_last: empty.clone(),
                atv_last: empty,
                y: None,
                y_dim: 0,
                invariant: true,
                recurrence: BlockRecurrence::default(),
            });
        }
        let pos = extend_basis(&empty, &ops.a_hat_t.solve(&hb)?)?;
        let neg = extend_basis(&pos, &ops.d_hat.solve(&hb)?)?;
        let mut st = KrylovState {
            v: empty.clone(),
            w: empty.clone(),
            t: DMatrix::zeros(0, 0),
            k: DMatrix::zeros(0, 0),
            g1: DMatrix::zeros(0, f1.ncols()),
            g2: DMatrix::zeros(0, f2.ncols()),
            f1,
            f2,
            blocks: Vec::new(),
            dv_last: empty.clone(),
            atv_last: empty,
            y: None,
            y_dim: 0,
            invariant: false,
            recurrence: BlockRecurrence::default(),
        };
        st.append_block(ops, pos, neg, 0)?;
        Ok(st)
    }

    /// Add `[pos, neg]` to `V`, the matching `W` block, and update `T`, `K`, `G`.
    fn append_block(&mut self, ops: &ShiftedOperators, pos: DenseMatrix, neg: DenseMatrix, step: usize) -> Result<()> {
        let vnew = hcat(&[&pos, &neg]);
        let b = vnew.ncols();
        let l = self.v.ncols();

        let atv = ops.a_hat_t.apply(&vnew)?;
        let (z, hcoef) = project_out(&self.w, &atv);
        let reference = atv.norm();
        let (wnew, r, sig) = reveal(&z, 0.0, reference)?;
        let smax = sig.first().copied().unwrap_or(0.0);
        let smin = sig.last().copied().unwrap_or(0.0);
        if wnew.ncols() != b || !(smin > BREAKDOWN_TOL * smax) {
            return Err(Error::Breakdown {
                step,
                detail: format!("new W block is numerically rank deficient (sigma ratio {:.2e})", smin / smax),
            });
        }

        // K: rows of the new V block are [hᵀ, Rᵀ]; older rows see zeros in the new columns.
        let mut k = grow(&self.k, l + b, l + b);
        k.view_mut((l, 0), (b, l)).copy_from(&hcoef.transpose());
        k.view_mut((l, l), (b, b)).copy_from(&r.transpose());

        // T: new rows couple only to the previous V block.
        let mut t = grow(&self.t, l + b, l + b);
        if let Some(last) = self.blocks.last() {
            let tau = wnew.tr_mul(&self.dv_last);
            t.view_mut((l, last.start), (b, last.width())).copy_from(&tau);
        }
        let dv = ops.d_hat.apply(&vnew)?;
        let w = hcat(&[&self.w, &wnew]);
        t.view_mut((0, l), (l + b, b)).copy_from(&w.tr_mul(&dv));

        self.g1 = vcat(&self.g1, &wnew.tr_mul(&self.f1));
        self.g2 = vcat(&self.g2, &wnew.tr_mul(&self.f2));
        self.v = hcat(&[&self.v, &vnew]);
        self.w = w;
        self.t = t;
        self.k = k;
        self.blocks.push(Block {
            start: l,
            pos: pos.ncols(),
            neg: neg.ncols(),
        });
        self.dv_last = dv;
        self.atv_last = atv;
        Ok(())
    }

    /// Next block from `M V_j = Â⁻ᵀ(D̂ V_j)` and `M⁻¹ V_j⁽²⁾ = D̂⁻¹(Âᵀ V_j⁽²⁾)`,
    /// `V_j⁽²⁾` being the inverse-power part of the newest block.
    pub fn build_spaces_step(&mut self, ops: &ShiftedOperators) -> Result<Expansion> {
        if self.invariant {
            return Ok(Expansion::Invariant);
        }
        let last = *self.blocks.last().expect("seeded state has a block");
        // On the whole block, M V_j ⊂ range V_{j+1} holds by construction
        // rather than through the recurrence.
        let pos_in = match self.recurrence {
            BlockRecurrence::WholeBlock => self.dv_last.clone(),
            BlockRecurrence::Split => self.dv_last.columns(0, last.pos).into_owned(),
        };
        let neg_in = self.atv_last.columns(last.pos, last.neg).into_owned();
        let pos = extend_basis(&self.v, &ops.a_hat_t.solve(&pos_in)?)?;
        let vp = hcat(&[&self.v, &pos]);
        let neg = extend_basis(&vp, &ops.d_hat.solve(&neg_in)?)?;
        if pos.ncols() + neg.ncols() == 0 {
            self.invariant = true;
            return Ok(Expansion::Invariant);
        }
        let step = self.blocks.len();
        self.append_block(ops, pos, neg, step)?;
        Ok(Expansion::Grew(self.v.ncols()))
    }

    /// Solve `T Y + Yᵀ K = −G₁G₂ᵀ` at the current dimension.
    pub fn solve_projected(&mut self) -> Result<&DenseMatrix> {
        let l = self.v.ncols();
        let y = if l == 0 {
            DMatrix::zeros(0, 0)
        } else {
            let e = -(&self.g1 * self.g2.transpose());
            solve_tsylv_dense(&TSylvEquation::new(self.t.clone(), self.k.clone(), e)?)?.x
        };
        self.y_dim = l;
        Ok(self.y.insert(y))
    }

    /// `‖L‖_F` of the lifted projected solution, from `‖τ Y_last‖_F`.
    ///
    /// `τ = W_newᵀ D̂ V_last` needs the block after the solved dimension;
    /// before expansion (or once the space is invariant) the equivalent
    /// `‖(I − WWᵀ) D̂ V_last Y_last‖_F` is used.
    pub fn residual_norm(&self) -> f64 {
        let Some(y) = &self.y else { return 0.0 };
        let Some(bi) = self.blocks.iter().position(|b| b.start + b.width() == self.y_dim) else {
            return 0.0;
        };
        let b = self.blocks[bi];
        let y_last = y.rows(b.start, b.width());
        if self.y_dim < self.v.ncols() {
            let tau = self.t.view((self.y_dim, b.start), (self.v.ncols() - self.y_dim, b.width()));
            (tau * y_last).norm()
        } else {
            let z = &self.dv_last * y_last;
            let c = self.w.tr_mul(&z);
            (z - &self.w * c).norm()
        }
    }

    /// `V Y Wᵀ` as a factored pair, truncated at `trunc_tol`.
    pub fn lift(&self, trunc_tol: f64) -> Result<LowRankPair> {
        let n = self.v.nrows();
        match &self.y {
            Some(y) if self.y_dim > 0 => {
                let (l, r, _) = split_core(y, trunc_tol, usize::MAX)?;
                Ok(LowRankPair {
                    p1: self.v.columns(0, self.y_dim) * l,
                    p2: self.w.columns(0, self.y_dim) * r,
                })
            }
            _ => Ok(LowRankPair::zeros(n)),
        }
    }

    pub fn dim(&self) -> usize {
        self.v.ncols()
    }

    pub fn set_recurrence(&mut self, recurrence: BlockRecurrence) {
        self.recurrence = recurrence;
    }

    /// Number of blocks built.
    pub fn m(&self) -> usize {
        self.blocks.len()
    }

    pub fn solved_dim(&self) -> usize {
        self.y_dim
    }

    pub fn is_invariant(&self) -> bool {
        self.invariant
    }

    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    pub fn w(&self) -> &DenseMatrix {
        &self.w
    }

    pub fn t(&self) -> &DenseMatrix {
        &self.t
    }

    pub fn k(&self) -> &DenseMatrix {
        &self.k
    }

    pub fn g1(&self) -> &DenseMatrix {
        &self.g1
    }

    pub fn g2(&self) -> &DenseMatrix {
        &self.g2
    }

    pub fn y(&self) -> Option<&DenseMatrix> {
        self.y.as_ref()
    }
}

/// Right-hand-side factors of the Newton step: `C + X_kᵀBX_k = F₁F₂ᵀ`
/// with `F₁ = [C₁ᵀ, P₂α]`, `F₂ = [C₂ᵀ, P₂β]`.
pub fn newton_rhs_factors(prob: &LowRankTRiccatiProblem, ops: &ShiftedOperators) -> (DenseMatrix, DenseMatrix) {
    (hcat(&[prob.c1t(), &ops.u_d]), hcat(&[prob.c2t(), &ops.u_a]))
}

/// Inner solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrylovOptions {
    pub m_max: usize,
    pub trunc_tol: f64,
    pub recurrence: BlockRecurrence,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions {
            m_max: DEFAULT_M_MAX,
            trunc_tol: crate::lowrank::DEFAULT_TRUNC_TOL,
            recurrence: BlockRecurrence::default(),
        }
    }
}

/// Solve `(D − X_kᵀB) X̃ + X̃ᵀ(A − BX_k) = −(C + X_kᵀBX_k)` to `‖L‖_F ≤ tol_abs`.
///
/// Non-convergence, breakdown and projected-solve failures are reported in
/// the [`InnerReport`] together with the last lifted approximation; `Err`
/// is reserved for invalid input and failures of the shifted operators.
pub fn solve_tsylv_krylov(
    prob: &LowRankTRiccatiProblem,
    x_k: &LowRankPair,
    tol_abs: f64,
    m_max: usize,
    trunc_tol: f64,
) -> Result<(LowRankPair, InnerReport)> {
    let opts = KrylovOptions { m_max, trunc_tol, ..Default::default() };
    solve_tsylv_krylov_with(prob, x_k, tol_abs, &opts)
}

/// As [`solve_tsylv_krylov`] with explicit options.
pub fn solve_tsylv_krylov_with(
    prob: &LowRankTRiccatiProblem,
    x_k: &LowRankPair,
    tol_abs: f64,
    opts: &KrylovOptions,
) -> Result<(LowRankPair, InnerReport)> {
    if !(tol_abs > 0.0) || opts.m_max == 0 {
        return Err(Error::InvalidConfig(format!("Krylov tolerance {tol_abs}, m_max {}", opts.m_max)));
    }
    let ops = prob.shifted_operators(x_k)?;
    let (f1, f2) = newton_rhs_factors(prob, &ops);
    solve_with_options(&ops, f1, f2, tol_abs, opts)
}

/// As [`solve_tsylv_krylov`] for given shifted operators and right-hand side `−F₁F₂ᵀ`.
pub fn solve_with_operators(
    ops: &ShiftedOperators,
    f1: DenseMatrix,
    f2: DenseMatrix,
    tol_abs: f64,
    m_max: usize,
    trunc_tol: f64,
) -> Result<(LowRankPair, InnerReport)> {
    let opts = KrylovOptions { m_max, trunc_tol, ..Default::default() };
    solve_with_options(ops, f1, f2, tol_abs, &opts)
}

pub fn solve_with_options(
    ops: &ShiftedOperators,
    f1: DenseMatrix,
    f2: DenseMatrix,
    tol_abs: f64,
    opts: &KrylovOptions,
) -> Result<(LowRankPair, InnerReport)> {
    let KrylovOptions { m_max, trunc_tol, recurrence } = *opts;
    let n = f1.nrows();
    let mut report = InnerReport {
        status: InnerStatus::MaxIterations,
        detail: String::new(),
        tol: tol_abs,
        residuals: Vec::new(),
        basis_dim: 0,
        solution_rank: 0,
    };
    let mut st = match KrylovState::new(ops, f1, f2) {
        Ok(st) => st,
        Err(Error::Breakdown { step, detail }) => {
            report.status = InnerStatus::Breakdown;
            report.detail = format!("step {step}: {detail}");
            return Ok((LowRankPair::zeros(n), report));
        }
        Err(e) => return Err(e),
    };
    st.set_recurrence(recurrence);
    if st.dim() == 0 {
        report.status = InnerStatus::Invariant;
        report.detail = "zero right-hand side".into();
        report.residuals.push(0.0);
        return Ok((LowRankPair::zeros(n), report));
    }
    let mut best = LowRankPair::zeros(n);
    for m in 1..=m_max {
        if let Err(e) = st.solve_projected() {
            report.status = InnerStatus::ProjectedSolveFailed;
            report.detail = format!("step {m}: {e}");
            break;
        }
        let expansion = match st.build_spaces_step(ops) {
            Ok(x) => x,
            Err(Error::Breakdown { detail, .. }) => {
                report.basis_dim = report.basis_dim.max(st.dim());
                report.residuals.push(st.residual_norm());
                best = st.lift(trunc_tol)?;
                report.status = InnerStatus::Breakdown;
                report.detail = format!("step {m}: {detail}");
                break;
            }
            Err(e) => return Err(e),
        };
        report.basis_dim = report.basis_dim.max(st.dim());
        let res = st.residual_norm();
        report.residuals.push(res);
        best = st.lift(trunc_tol)?;
        if res <= tol_abs {
            report.status = InnerStatus::Converged;
            report.detail = format!("residual {res:.3e} <= {tol_abs:.3e} after {m} steps");
            break;
        }
        if expansion == Expansion::Invariant {
            report.status = InnerStatus::Invariant;
            report.detail = format!("invariant space of dimension {} after {m} steps", st.dim());
            break;
        }
        if m == m_max {
            report.detail = format!("residual {res:.3e} above {tol_abs:.3e} after {m_max} steps");
        }
    }
    report.solution_rank = best.rank();
    Ok((best, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::tsylv_oracle_solve;
    use crate::operator::{DenseOperator, OperatorRef, SparseOperator};
    use crate::sparse::CsrMatrix;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn rand_mat(n: usize, m: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        DMatrix::from_fn(n, m, |_, _| rng.random::<f64>() - 0.5)
    }

    /// Sparse-ish nonsymmetric `A`, `D` with well separated spectra.
    fn desk_problem(n: usize, p: usize, q: usize, seed: u64) -> LowRankTRiccatiProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lap = |shift: f64, conv: f64| {
            let mut t = Vec::new();
            for i in 0..n {
                t.push((i, i, 2.0 + shift));
                if i + 1 < n {
                    t.push((i, i + 1, -1.0 + conv));
                    t.push((i + 1, i, -1.0 - conv));
                }
            }
            for _ in 0..n {
                t.push((rng.random_range(0..n), rng.random_range(0..n), 0.1 * (rng.random::<f64>() - 0.5)));
            }
            CsrMatrix::from_triplets(n, n, &t).unwrap()
        };
        let a: OperatorRef = Arc::new(SparseOperator::new(lap(0.5, 0.0)).unwrap());
        let d: OperatorRef = Arc::new(SparseOperator::new(lap(1.0, 0.3)).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 99);
        LowRankTRiccatiProblem::new(
            a,
            d,
            rand_mat(n, p, &mut rng) * 0.1,
            rand_mat(n, p, &mut rng) * 0.1,
            rand_mat(q, n, &mut rng),
            rand_mat(q, n, &mut rng),
        )
        .unwrap()
    }

    fn dense_shifted(prob: &LowRankTRiccatiProblem, x: &LowRankPair) -> (DenseMatrix, DenseMatrix, DenseMatrix) {
        let (a, b, c, d) = prob.to_dense();
        let xd = x.to_dense();
        let dh = &d - xd.transpose() * &b;
        let ah = &a - &b * &xd;
        let rhs = -(&c + xd.transpose() * &b * &xd);
        (dh, ah, rhs)
    }

    fn dense_inner_residual(dh: &DenseMatrix, ah: &DenseMatrix, rhs: &DenseMatrix, x: &DenseMatrix) -> f64 {
        (dh * x + x.transpose() * ah - rhs).norm()
    }

    fn small_x(n: usize, t: usize, seed: u64) -> LowRankPair {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LowRankPair::new(rand_mat(n, t, &mut rng) * 0.3, rand_mat(n, t, &mut rng) * 0.3).unwrap()
    }

    #[test]
    fn scalar_reduction() {
        // ℓ = 1: t y + y k = −g₁g₂.
        let one = |v: f64| dmatrix![v];
        let prob = LowRankTRiccatiProblem::new(
            Arc::new(DenseOperator::new(one(1.0)).unwrap()),
            Arc::new(DenseOperator::new(one(2.0)).unwrap()),
            one(0.0),
            one(0.0),
            one(-1.0),
            one(1.0),
        )
        .unwrap();
        let (x, rep) = solve_tsylv_krylov(&prob, &LowRankPair::zeros(1), 1e-14, 5, 1e-14).unwrap();
        assert!(rep.status.is_success(), "{rep:?}");
        assert!((x.to_dense()[(0, 0)] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let mut prob = desk_problem(20, 1, 1, 3);
        prob = LowRankTRiccatiProblem::new(
            prob.a.clone(),
            prob.d.clone(),
            prob.b1.clone(),
            prob.b2.clone(),
            DMatrix::zeros(1, 20),
            DMatrix::zeros(1, 20),
        )
        .unwrap();
        let (x, rep) = solve_tsylv_krylov(&prob, &LowRankPair::zeros(20), 1e-10, 5, 1e-12).unwrap();
        assert_eq!(x.rank(), 0);
        assert_eq!(rep.residuals, vec![0.0]);
    }

    #[test]
    fn bases_stay_orthonormal_and_projections_consistent() {
        let n = 200;
        let prob = desk_problem(n, 2, 1, 1);
        let x = small_x(n, 2, 11);
        let ops = prob.shifted_operators(&x).unwrap();
        let (f1, f2) = newton_rhs_factors(&prob, &ops);
        let mut st = KrylovState::new(&ops, f1.clone(), f2.clone()).unwrap();
        // U_D and U_A share the range of P2, so H has rank q + q + 2.
        assert_eq!(st.dim(), 2 * (2 * 1 + 2));
        let (dh, ah, _) = dense_shifted(&prob, &x);
        let mut prev_v = st.v().clone();
        for _ in 0..6 {
            st.build_spaces_step(&ops).unwrap();
            let l = st.dim();
            let id = DMatrix::<f64>::identity(l, l);
            assert!((st.v().tr_mul(st.v()) - &id).norm() <= 1e-10);
            assert!((st.w().tr_mul(st.w()) - &id).norm() <= 1e-10);
            let t_dense = st.w().transpose() * &dh * st.v();
            let k_dense = st.v().transpose() * &ah * st.w();
            assert!((st.t() - &t_dense).norm() <= 1e-10 * t_dense.norm());
            assert!((st.k() - &k_dense).norm() <= 1e-10 * k_dense.norm());
            assert!((st.g1() - st.w().tr_mul(&f1)).norm() <= 1e-12 * f1.norm());
            // Nesting: the previous basis is a column prefix.
            assert_eq!(st.v().columns(0, prev_v.ncols()), prev_v);
            prev_v = st.v().clone();
        }
    }

    #[test]
    fn residual_formula_matches_dense_residual() {
        let n = 150;
        let prob = desk_problem(n, 1, 2, 2);
        let x = small_x(n, 3, 12);
        let ops = prob.shifted_operators(&x).unwrap();
        let (f1, f2) = newton_rhs_factors(&prob, &ops);
        let (dh, ah, rhs) = dense_shifted(&prob, &x);
        let mut st = KrylovState::new(&ops, f1, f2).unwrap();
        for _ in 0..5 {
            let y = st.solve_projected().unwrap().clone();
            let proj = st.t() * &y + y.transpose() * st.k() + st.g1() * st.g2().transpose();
            assert!(proj.norm() <= 1e-12 * (st.g1() * st.g2().transpose()).norm());
            let before = st.residual_norm();
            st.build_spaces_step(&ops).unwrap();
            let formula = st.residual_norm();
            let l = st.solved_dim();
            let lifted = st.v().columns(0, l) * &y * st.w().columns(0, l).transpose();
            let dense = dense_inner_residual(&dh, &ah, &rhs, &lifted);
            assert!((formula - dense).abs() <= 1e-9 * dense, "{formula} vs {dense}");
            assert!((before - dense).abs() <= 1e-9 * dense, "{before} vs {dense}");
        }
    }

    #[test]
    fn plain_tsylvester_matches_oracle() {
        let n = 60;
        let prob = desk_problem(n, 1, 1, 4);
        let zero_b = LowRankTRiccatiProblem::new(
            prob.a.clone(),
            prob.d.clone(),
            DMatrix::zeros(n, 1),
            DMatrix::zeros(n, 1),
            prob.c1t().transpose(),
            prob.c2t().transpose(),
        )
        .unwrap();
        let (a, _, c, d) = zero_b.to_dense();
        let want = tsylv_oracle_solve(&d, &a, &(-&c)).unwrap();
        let tol = 1e-11 * c.norm();
        let (x, rep) = solve_tsylv_krylov(&zero_b, &LowRankPair::zeros(n), tol, 50, 1e-14).unwrap();
        assert!(rep.status.is_success(), "{rep:?}");
        assert!((x.to_dense() - &want).norm() <= 1e-8 * want.norm());
    }

    #[test]
    fn shifted_solve_matches_dense_and_full_space_is_exact() {
        let n = 48;
        let prob = desk_problem(n, 1, 1, 5);
        let x = small_x(n, 2, 13);
        let (dh, ah, rhs) = dense_shifted(&prob, &x);
        let want = tsylv_oracle_solve(&dh, &ah, &rhs).unwrap();
        // 4(p+q) = 8 columns per block: six blocks exhaust ℝ⁴⁸.
        let (got, rep) = solve_tsylv_krylov(&prob, &x, 1e-300, 12, 1e-15).unwrap();
        assert!(rep.basis_dim <= n);
        assert!((got.to_dense() - &want).norm() <= 1e-8 * want.norm(), "{rep:?}");
    }

    #[test]
    fn residual_history_reaches_tolerance() {
        let n = 400;
        let prob = desk_problem(n, 1, 1, 6);
        let x = small_x(n, 2, 14);
        let c_norm = prob.c_pair().to_dense().norm();
        let tol = 1e-8 * c_norm;
        let (got, rep) = solve_tsylv_krylov(&prob, &x, tol, 50, 1e-12).unwrap();
        assert_eq!(rep.status, InnerStatus::Converged, "{rep:?}");
        assert!(rep.final_residual().unwrap() <= tol);
        let (dh, ah, rhs) = dense_shifted(&prob, &x);
        let dense = dense_inner_residual(&dh, &ah, &rhs, &got.to_dense());
        assert!(dense <= 2.0 * tol, "{dense} vs {tol}");
    }

    #[test]
    fn max_iterations_is_reported_with_history() {
        let n = 300;
        let prob = desk_problem(n, 1, 1, 7);
        let (_, rep) = solve_tsylv_krylov(&prob, &LowRankPair::zeros(n), 1e-300, 3, 1e-12).unwrap();
        assert_eq!(rep.status, InnerStatus::MaxIterations);
        assert_eq!(rep.residuals.len(), 3);
        assert!(solve_tsylv_krylov(&prob, &LowRankPair::zeros(n), 0.0, 3, 1e-12).is_err());
    }
}
