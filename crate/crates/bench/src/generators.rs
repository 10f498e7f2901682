//! Test problem families: a convection-diffusion pair on the unit square
//! (`ex1`) and Laplacian-type splittings of a random singular M-matrix (`ex2`).

use std::sync::Arc;

use nalgebra::DMatrix;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use triccati::dense::spectral_radius;
use triccati::lowrank::LowRankTRiccatiProblem;
use triccati::operator::{OperatorRef, SparseOperator};
use triccati::riccati_dense::TRiccatiProblem;
use triccati::sparse::CsrMatrix;
use triccati::{DenseMatrix, Error, Result};

/// Default reaction coefficient of the `ex1` operator `D`.
pub const DEFAULT_GAMMA: f64 = 1e4;
/// Strongly connected blocks up to this order get a dense eigenvalue solve.
const DENSE_BLOCK_MAX: usize = 400;

/// Side `k` of the interior grid with `n = k²`.
pub fn grid_side(n: usize) -> Result<usize> {
    let k = (n as f64).sqrt().round() as usize;
    if n == 0 || k * k != n {
        return Err(Error::InvalidConfig(format!("ex1 needs n = k² for an integer k, got n = {n}")));
    }
    Ok(k)
}

/// `(A, D)` on the `k × k` interior grid of the unit square, `h = 1/(k+1)`,
/// homogeneous Dirichlet conditions, unknown `(i, j)` at index `i + k·j`
/// for the node `(x, y) = ((i+1)h, (j+1)h)`.
///
/// `A` discretizes `−u_xx − u_yy` with the 5-point stencil, `D` adds
/// `y(1−x)u_x` (centered differences) and `γu`.
pub fn ex1_operators(k: usize, gamma: f64) -> (CsrMatrix, CsrMatrix) {
    let n = k * k;
    let h = 1.0 / (k + 1) as f64;
    let h2 = h * h;
    let mut ta = Vec::with_capacity(5 * n);
    let mut td = Vec::with_capacity(5 * n);
    for j in 0..k {
        for i in 0..k {
            let row = i + k * j;
            let (x, y) = ((i + 1) as f64 * h, (j + 1) as f64 * h);
            let conv = y * (1.0 - x) / (2.0 * h);
            ta.push((row, row, 4.0 / h2));
            td.push((row, row, 4.0 / h2 + gamma));
            let mut couple = |col: usize, c: f64| {
                ta.push((row, col, -1.0 / h2));
                td.push((row, col, -1.0 / h2 + c));
            };
            if i > 0 {
                couple(row - 1, -conv);
            }
            if i + 1 < k {
                couple(row + 1, conv);
            }
            if j > 0 {
                couple(row - k, 0.0);
            }
            if j + 1 < k {
                couple(row + k, 0.0);
            }
        }
    }
    let a = CsrMatrix::from_triplets(n, n, &ta).expect("stencil indices in range");
    let d = CsrMatrix::from_triplets(n, n, &td).expect("stencil indices in range");
    (a, d)
}

fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>())
}

fn unit_norm(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let m = uniform(rows, cols, rng);
    let nrm = m.norm();
    if nrm > 0.0 {
        m / nrm
    } else {
        m
    }
}

fn operator(a: CsrMatrix) -> Result<OperatorRef> {
    Ok(Arc::new(SparseOperator::new(a)?))
}

/// Factored `B = B₁B₂ᵀ`, `C = C₁C₂ᵀ` with unit-norm uniform factors (`n × p`,
/// `n × q`); with `sign_consistency` the sign of `C₂` is flipped so `C ≤ 0`.
fn lowrank_factors(
    n: usize,
    p: usize,
    q: usize,
    sign_consistency: bool,
    rng: &mut ChaCha8Rng,
) -> (DenseMatrix, DenseMatrix, DenseMatrix, DenseMatrix) {
    let b1 = unit_norm(n, p, rng);
    let b2 = unit_norm(n, p, rng);
    let c1 = unit_norm(n, q, rng);
    let mut c2 = unit_norm(n, q, rng);
    if sign_consistency {
        c2.neg_mut();
    }
    (b1, b2, c1, c2)
}

/// Sparse coefficients and factors of a low-rank problem, before they are
/// wrapped as operators. `C₁`, `C₂` are `n × q` (`C = C₁C₂ᵀ`).
#[derive(Debug, Clone)]
pub struct LowRankParts {
    pub a: CsrMatrix,
    pub d: CsrMatrix,
    pub b1: DenseMatrix,
    pub b2: DenseMatrix,
    pub c1: DenseMatrix,
    pub c2: DenseMatrix,
}

impl LowRankParts {
    pub fn into_problem(self) -> Result<LowRankTRiccatiProblem> {
        let (c1t, c2t) = (self.c1.transpose(), self.c2.transpose());
        LowRankTRiccatiProblem::new(operator(self.a)?, operator(self.d)?, self.b1, self.b2, c1t, c2t)
    }
}

/// Dense `ex1`: stencil operators with full uniform `[0, 1)` matrices `B`
/// and `C` (`C` negated under `sign_consistency`).
pub fn generate_ex1_dense(n: usize, gamma: f64, seed: u64, sign_consistency: bool) -> Result<TRiccatiProblem> {
    let k = grid_side(n)?;
    let (a, d) = ex1_operators(k, gamma);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = uniform(n, n, &mut rng);
    let mut c = uniform(n, n, &mut rng);
    if sign_consistency {
        c.neg_mut();
    }
    TRiccatiProblem::new(a.to_dense(), b, c, d.to_dense())
}

/// Factored `ex1` with `p`-column `B` factors and `q`-column `C` factors.
pub fn generate_ex1_lowrank(
    n: usize,
    p: usize,
    q: usize,
    gamma: f64,
    seed: u64,
    sign_consistency: bool,
) -> Result<LowRankTRiccatiProblem> {
    ex1_lowrank_parts(n, p, q, gamma, seed, sign_consistency)?.into_problem()
}

pub fn ex1_lowrank_parts(
    n: usize,
    p: usize,
    q: usize,
    gamma: f64,
    seed: u64,
    sign_consistency: bool,
) -> Result<LowRankParts> {
    let k = grid_side(n)?;
    let (a, d) = ex1_operators(k, gamma);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b1, b2, c1, c2) = lowrank_factors(n, p, q, sign_consistency, &mut rng);
    Ok(LowRankParts { a, d, b1, b2, c1, c2 })
}

/// Dense `ex2` and its manufactured solution.
///
/// `W = diag(R·1) − R` for uniform `R` of order `2n`, partitioned as
/// `[[D, M], [N, A]]`; `B = −N/‖N‖_F`; `X_exact` uniform with unit norm and
/// `C = −(D X + XᵀA − XᵀBX)` at `X = X_exact`.
pub fn generate_ex2_dense(n: usize, seed: u64) -> Result<(TRiccatiProblem, DenseMatrix)> {
    if n == 0 {
        return Err(Error::InvalidConfig("ex2 needs n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = ex2_w(n, &mut rng);
    let d = w.view((0, 0), (n, n)).into_owned();
    let nn = w.view((n, 0), (n, n)).into_owned();
    let a = w.view((n, n), (n, n)).into_owned();
    let b = -&nn / nn.norm();
    let x = unit_norm(n, n, &mut rng);
    let xt = x.transpose();
    let c = -(&d * &x + &xt * &a - &xt * &b * &x);
    Ok((TRiccatiProblem::new(a, b, c, d)?, x))
}

/// `diag(R·1) − R` for uniform `R` of order `2n`.
pub fn ex2_w(n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let r = uniform(2 * n, 2 * n, rng);
    let mut w = -&r;
    for i in 0..2 * n {
        w[(i, i)] += r.row(i).sum();
    }
    w
}

/// Sparse `n × n` matrix with `round(density·n²)` uniform `[0, 1)` entries
/// at uniformly drawn positions (coinciding positions are summed).
pub fn sprand(n: usize, density: f64, rng: &mut ChaCha8Rng) -> CsrMatrix {
    let count = (density * (n * n) as f64).round() as usize;
    let t: Vec<_> = (0..count)
        .map(|_| (rng.random_range(0..n), rng.random_range(0..n), rng.random::<f64>()))
        .collect();
    CsrMatrix::from_triplets(n, n, &t).expect("indices in range")
}

/// Spectral radius of a sparse matrix with nonnegative entries.
///
/// Eigenvalues of `F` are those of its diagonal blocks in the strongly
/// connected component ordering; small blocks are solved densely, larger
/// ones by power iteration on `F_block + I` (whose dominant eigenvalue is
/// `ρ(F_block) + 1` for an irreducible nonnegative block).
pub fn sparse_spectral_radius(f: &CsrMatrix) -> Result<f64> {
    if f.data().iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidConfig("sparse_spectral_radius expects a nonnegative matrix".into()));
    }
    let n = f.nrows();
    let mut g = DiGraph::<(), ()>::with_capacity(n, f.nnz());
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for (j, v) in f.row(i) {
            if v != 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let mut rho = 0.0f64;
    let mut local = vec![usize::MAX; n];
    for comp in tarjan_scc(&g) {
        let idx: Vec<usize> = comp.iter().map(|v| v.index()).collect();
        for (l, &i) in idx.iter().enumerate() {
            local[i] = l;
        }
        let m = idx.len();
        let block_rho = if m <= DENSE_BLOCK_MAX {
            let mut blk = DenseMatrix::zeros(m, m);
            for (l, &i) in idx.iter().enumerate() {
                for (j, v) in f.row(i) {
                    if local[j] != usize::MAX {
                        blk[(l, local[j])] += v;
                    }
                }
            }
            spectral_radius(&blk)?
        } else {
            shifted_power_iteration(f, &idx, &local)
        };
        rho = rho.max(block_rho);
        for &i in &idx {
            local[i] = usize::MAX;
        }
    }
    Ok(rho)
}

fn shifted_power_iteration(f: &CsrMatrix, idx: &[usize], local: &[usize]) -> f64 {
    let m = idx.len();
    let apply = |x: &[f64]| -> Vec<f64> {
        idx.iter()
            .map(|&i| f.row(i).filter(|(j, _)| local[*j] != usize::MAX).map(|(j, v)| v * x[local[j]]).sum())
            .collect()
    };
    // Collatz-Wielandt: min and max of (Fx)_i / x_i bracket ρ for x > 0.
    let mut x = vec![1.0; m];
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    for _ in 0..100_000 {
        let fx = apply(&x);
        let (l, h) = fx.iter().zip(&x).fold((f64::INFINITY, 0.0f64), |(l, h), (a, b)| (l.min(a / b), h.max(a / b)));
        lo = f64::max(lo, l);
        hi = f64::min(hi, h);
        if hi - lo <= 1e-13 * hi {
            break;
        }
        let mut y: Vec<f64> = fx.iter().zip(&x).map(|(a, b)| a + b).collect();
        let top = y.iter().cloned().fold(0.0, f64::max);
        y.iter_mut().for_each(|v| *v /= top);
        x = y;
    }
    0.5 * (lo + hi)
}

/// Factored `ex2`: `D = F + (ρ(F)+1)I`, `A = G + (ρ(G)+20)I` with `F`, `G`
/// from [`sprand`] at density `1/n`.
pub fn generate_ex2_lowrank(n: usize, p: usize, q: usize, seed: u64, sign_consistency: bool) -> Result<LowRankTRiccatiProblem> {
    ex2_lowrank_parts(n, p, q, seed, sign_consistency)?.into_problem()
}

pub fn ex2_lowrank_parts(n: usize, p: usize, q: usize, seed: u64, sign_consistency: bool) -> Result<LowRankParts> {
    if n == 0 {
        return Err(Error::InvalidConfig("ex2 needs n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = sprand(n, 1.0 / n as f64, &mut rng);
    let g = sprand(n, 1.0 / n as f64, &mut rng);
    let d = f.add_diagonal(sparse_spectral_radius(&f)? + 1.0);
    let a = g.add_diagonal(sparse_spectral_radius(&g)? + 20.0);
    let (b1, b2, c1, c2) = lowrank_factors(n, p, q, sign_consistency, &mut rng);
    Ok(LowRankParts { a, d, b1, b2, c1, c2 })
}
