//! Random problem instances satisfying the sign and M-matrix conditions, for tests and examples.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::riccati_dense::TRiccatiProblem;
use crate::DenseMatrix;

/// Coefficients `(A, B, C, D)` of a random order-`n` instance.
///
/// `A ≤ 0`, `D` a strictly diagonally dominant Z-matrix whose dominance
/// margin exceeds the column sums of `|A|`, `C ≤ 0` with entries in
/// `(−1, 0]`, and `B ≥ 0` small enough that `R(t·1) > 0` for some `t > 0`,
/// so a minimal nonnegative solution exists.
pub fn random_instance_parts(n: usize, seed: u64) -> (DenseMatrix, DenseMatrix, DenseMatrix, DenseMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(n, n, |_, _| -0.5 * rng.random::<f64>());
    let mut d = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { -rng.random::<f64>() });
    let acol = (0..n).map(|j| a.column(j).abs().sum()).fold(0.0, f64::max);
    let margin = 1.0 + rng.random::<f64>();
    for i in 0..n {
        d[(i, i)] = d.row(i).abs().sum() + acol + margin;
    }
    let bscale = 0.2 / (n * n) as f64;
    let b = DMatrix::from_fn(n, n, |_, _| bscale * rng.random::<f64>());
    let c = DMatrix::from_fn(n, n, |_, _| -rng.random::<f64>());
    (a, b, c, d)
}

/// As [`random_instance_parts`], wrapped in an audited problem.
pub fn random_instance(n: usize, seed: u64) -> TRiccatiProblem {
    let (a, b, c, d) = random_instance_parts(n, seed);
    TRiccatiProblem::new(a, b, c, d).expect("square coefficients")
}

/// Sparse order-`n` instance in factored form satisfying the sign and M-matrix conditions:
/// `D` a diagonally dominant tridiagonal Z-matrix, `A ≤ 0` sparse,
/// `B₁, B₂ ≥ 0` (`n × p`) and `C₁ ≥ 0`, `C₂ ≤ 0` (`q × n`).
pub fn random_instance_lowrank(n: usize, p: usize, q: usize, seed: u64) -> crate::lowrank::LowRankTRiccatiProblem {
    use crate::operator::{OperatorRef, SparseOperator};
    use crate::sparse::CsrMatrix;
    use std::sync::Arc;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ta = Vec::new();
    for i in 0..n {
        ta.push((i, i, -0.2 - 0.2 * rng.random::<f64>()));
        for _ in 0..2 {
            ta.push((rng.random_range(0..n), i, -0.1 * rng.random::<f64>()));
        }
    }
    let a = CsrMatrix::from_triplets(n, n, &ta).expect("in range");
    let at = a.transpose();
    let acol = (0..n).map(|j| at.row(j).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut td = Vec::new();
    for i in 0..n {
        let lo = if i > 0 { rng.random::<f64>() } else { 0.0 };
        let hi = if i + 1 < n { rng.random::<f64>() } else { 0.0 };
        if i > 0 {
            td.push((i, i - 1, -lo));
        }
        if i + 1 < n {
            td.push((i, i + 1, -hi));
        }
        td.push((i, i, lo + hi + acol + 0.5 + rng.random::<f64>()));
    }
    let d = CsrMatrix::from_triplets(n, n, &td).expect("in range");
    let scale = 1.0 / (n as f64).sqrt();
    let b1 = DMatrix::from_fn(n, p, |_, _| 0.5 * scale * rng.random::<f64>());
    let b2 = DMatrix::from_fn(n, p, |_, _| 0.5 * scale * rng.random::<f64>());
    let c1 = DMatrix::from_fn(q, n, |_, _| scale * rng.random::<f64>());
    let c2 = DMatrix::from_fn(q, n, |_, _| -scale * rng.random::<f64>());
    let a: OperatorRef = Arc::new(SparseOperator::new(a).expect("square"));
    let d: OperatorRef = Arc::new(SparseOperator::new(d).expect("square"));
    crate::lowrank::LowRankTRiccatiProblem::new(a, d, b1, b2, c1, c2).expect("consistent shapes")
}
