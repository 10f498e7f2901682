//! Left-looking sparse LU (Gilbert–Peierls) with threshold partial pivoting.
//!
//! Factors `P A Q = L U` with `Q` a minimum-degree column order; the pivot
//! search prefers the entry on the (permuted) diagonal when it is within the
//! threshold of the largest candidate.

use super::{minimum_degree, CsrMatrix};
use crate::error::{shape_err, Error, Result};

/// Diagonal preference threshold for partial pivoting.
pub const PIVOT_THRESHOLD: f64 = 0.1;

const NONE: usize = usize::MAX;

/// Column-compressed triangular factor.
#[derive(Debug, Clone)]
struct Csc {
    colptr: Vec<usize>,
    rows: Vec<usize>,
    vals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SparseLu {
    n: usize,
    /// Unit lower triangle, diagonal stored first in each column.
    l: Csc,
    /// Upper triangle, diagonal stored last in each column.
    u: Csc,
    /// `pinv[i]` is the pivot step at which row `i` was chosen.
    pinv: Vec<usize>,
    /// Column order.
    q: Vec<usize>,
}

impl SparseLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(shape_err(format!("LU of a {}x{} matrix", n, a.ncols())));
        }
        let q = minimum_degree(a);
        // Columns of A are rows of Aᵀ.
        let at = a.transpose();

        let mut l = Csc {
            colptr: Vec::with_capacity(n + 1),
            rows: Vec::with_capacity(2 * a.nnz() + n),
            vals: Vec::with_capacity(2 * a.nnz() + n),
        };
        let mut u = Csc {
            colptr: Vec::with_capacity(n + 1),
            rows: Vec::with_capacity(2 * a.nnz() + n),
            vals: Vec::with_capacity(2 * a.nnz() + n),
        };
        let mut pinv = vec![NONE; n];
        let mut x = vec![0.0; n];
        let mut reach = Reach::new(n);

        for k in 0..n {
            l.colptr.push(l.rows.len());
            u.colptr.push(u.rows.len());
            let col = q[k];

            // x = L \ A(:, col) restricted to the reach of the column pattern.
            let pattern = reach.compute(&l, at.row(col).map(|(i, _)| i), &pinv);
            for &i in pattern {
                x[i] = 0.0;
            }
            for (i, v) in at.row(col) {
                x[i] = v;
            }
            for &j in pattern {
                let jj = pinv[j];
                if jj == NONE {
                    continue;
                }
                let xj = x[j];
                if xj == 0.0 {
                    continue;
                }
                for p in l.colptr[jj] + 1..l.colptr.get(jj + 1).copied().unwrap_or(l.rows.len()) {
                    x[l.rows[p]] -= l.vals[p] * xj;
                }
            }

            let mut ipiv = NONE;
            let mut amax = -1.0;
            for &i in pattern {
                if pinv[i] == NONE {
                    let t = x[i].abs();
                    if t > amax {
                        amax = t;
                        ipiv = i;
                    }
                } else {
                    u.rows.push(pinv[i]);
                    u.vals.push(x[i]);
                }
            }
            if ipiv == NONE || amax <= 0.0 || !amax.is_finite() {
                return Err(Error::Singular(format!("sparse LU: no pivot in column {col} (step {k})")));
            }
            if pinv[col] == NONE && x[col].abs() >= amax * PIVOT_THRESHOLD {
                ipiv = col;
            }
            let pivot = x[ipiv];
            u.rows.push(k);
            u.vals.push(pivot);
            pinv[ipiv] = k;
            l.rows.push(ipiv);
            l.vals.push(1.0);
            for &i in pattern {
                if pinv[i] == NONE {
                    l.rows.push(i);
                    l.vals.push(x[i] / pivot);
                }
                x[i] = 0.0;
            }
        }
        l.colptr.push(l.rows.len());
        u.colptr.push(u.rows.len());
        for r in &mut l.rows {
            *r = pinv[*r];
        }
        Ok(SparseLu { n, l, u, pinv, q })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    /// Entries in `L` and `U` (including both diagonals).
    pub fn nnz(&self) -> usize {
        self.l.rows.len() + self.u.rows.len()
    }

    /// Overwrite `b` with `A⁻¹ b`; `work` must have length `n`.
    pub fn solve_in_place(&self, b: &mut [f64], work: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        // y = P b
        for (i, &bi) in b.iter().enumerate() {
            work[self.pinv[i]] = bi;
        }
        // L y = y
        for j in 0..self.n {
            let yj = work[j];
            if yj != 0.0 {
                for p in self.l.colptr[j] + 1..self.l.colptr[j + 1] {
                    work[self.l.rows[p]] -= self.l.vals[p] * yj;
                }
            }
        }
        // U y = y
        for j in (0..self.n).rev() {
            let last = self.u.colptr[j + 1] - 1;
            work[j] /= self.u.vals[last];
            let yj = work[j];
            if yj != 0.0 {
                for p in self.u.colptr[j]..last {
                    work[self.u.rows[p]] -= self.u.vals[p] * yj;
                }
            }
        }
        // x = Q y
        for (k, &qk) in self.q.iter().enumerate() {
            b[qk] = work[k];
        }
    }

    /// Overwrite `b` with `A⁻ᵀ b`; `work` must have length `n`.
    pub fn solve_transpose_in_place(&self, b: &mut [f64], work: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        for (k, &qk) in self.q.iter().enumerate() {
            work[k] = b[qk];
        }
        // Uᵀ y = y
        for j in 0..self.n {
            let last = self.u.colptr[j + 1] - 1;
            let mut s = work[j];
            for p in self.u.colptr[j]..last {
                s -= self.u.vals[p] * work[self.u.rows[p]];
            }
            work[j] = s / self.u.vals[last];
        }
        // Lᵀ y = y
        for j in (0..self.n).rev() {
            let mut s = work[j];
            for p in self.l.colptr[j] + 1..self.l.colptr[j + 1] {
                s -= self.l.vals[p] * work[self.l.rows[p]];
            }
            work[j] = s;
        }
        for (i, bi) in b.iter_mut().enumerate() {
            *bi = work[self.pinv[i]];
        }
    }
}

/// Depth-first reach in the graph of the partial `L`, with stamp marks.
struct Reach {
    mark: Vec<usize>,
    stamp: usize,
    stack: Vec<usize>,
    pstack: Vec<usize>,
    out: Vec<usize>,
}

impl Reach {
    fn new(n: usize) -> Self {
        Reach {
            mark: vec![0; n],
            stamp: 0,
            stack: Vec::with_capacity(n),
            pstack: Vec::with_capacity(n),
            out: Vec::with_capacity(n),
        }
    }

    /// Nodes reachable from `starts`, in topological order.
    fn compute(&mut self, l: &Csc, starts: impl Iterator<Item = usize>, pinv: &[usize]) -> &[usize] {
        self.stamp += 1;
        self.out.clear();
        let stamp = self.stamp;
        let col_end = |jj: usize| l.colptr.get(jj + 1).copied().unwrap_or(l.rows.len());
        for s in starts {
            if self.mark[s] == stamp {
                continue;
            }
            self.stack.clear();
            self.pstack.clear();
            self.stack.push(s);
            self.pstack.push(NONE);
            while let Some(&j) = self.stack.last() {
                let top = self.stack.len() - 1;
                let jj = pinv[j];
                if self.mark[j] != stamp {
                    self.mark[j] = stamp;
                    self.pstack[top] = if jj == NONE { 0 } else { l.colptr[jj] + 1 };
                }
                let end = if jj == NONE { 0 } else { col_end(jj) };
                let mut pushed = false;
                let mut p = self.pstack[top];
                while p < end {
                    let i = l.rows[p];
                    p += 1;
                    if self.mark[i] != stamp {
                        self.pstack[top] = p;
                        self.stack.push(i);
                        self.pstack.push(NONE);
                        pushed = true;
                        break;
                    }
                }
                if !pushed {
                    self.stack.pop();
                    self.pstack.pop();
                    self.out.push(j);
                }
            }
        }
        // Postorder reversed is a topological order.
        self.out.reverse();
        &self.out
    }
}
