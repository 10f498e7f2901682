//! Dense T-Sylvester solver `D X + Xᵀ A = E` via the real generalized Schur
//! form of the pair `(D, Aᵀ)`.
//!
//! With `D = Q S Zᵀ`, `Aᵀ = Q T Zᵀ` and `W = Zᵀ X Q` the equation becomes
//! `S W + Wᵀ Tᵀ = Qᵀ E Q`, which is solved block by block from the bottom-right
//! corner. Entries `W_IJ` and `W_JI` are coupled and solved together.

use std::ffi::c_char;

use nalgebra::{DMatrix, DVector};

use crate::error::{shape_err, Error, Result};
use crate::DenseMatrix;

/// Reciprocal condition estimate below which the operator counts as singular.
pub const RCOND_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct TSylvEquation {
    pub d: DenseMatrix,
    pub a: DenseMatrix,
    pub e: DenseMatrix,
}

impl TSylvEquation {
    pub fn new(d: DenseMatrix, a: DenseMatrix, e: DenseMatrix) -> Result<Self> {
        let n = d.nrows();
        if !d.is_square() || a.shape() != (n, n) || e.shape() != (n, n) {
            return Err(shape_err(format!(
                "T-Sylvester: D {:?}, A {:?}, E {:?}",
                d.shape(),
                a.shape(),
                e.shape()
            )));
        }
        Ok(TSylvEquation { d, a, e })
    }
}

/// Solution together with its diagnostics.
#[derive(Debug, Clone)]
pub struct TSylvSolution {
    pub x: DenseMatrix,
    /// `‖D X + Xᵀ A − E‖_F / ‖E‖_F` (absolute when `E = 0`).
    pub rel_residual: f64,
    /// Smallest reciprocal condition estimate over the coupled block systems.
    pub rcond: f64,
}

/// Generalized Schur factorization of `(D, Aᵀ)`, reusable for several right-hand sides.
#[derive(Debug, Clone)]
pub struct TSylvFactor {
    n: usize,
    q: DenseMatrix,
    z: DenseMatrix,
    /// `Sᵀ` and `T`ᵀ stored so that rows of `S`, `T` are contiguous.
    st: DenseMatrix,
    tt: DenseMatrix,
    s: DenseMatrix,
    t: DenseMatrix,
    /// (start, size) of the diagonal blocks of `S`.
    blocks: Vec<(usize, usize)>,
    scale: f64,
}

impl TSylvFactor {
    pub fn new(d: &DenseMatrix, a: &DenseMatrix) -> Result<Self> {
        let n = d.nrows();
        if !d.is_square() || a.shape() != (n, n) {
            return Err(shape_err(format!("T-Sylvester: D {:?}, A {:?}", d.shape(), a.shape())));
        }
        let (s, t, q, z) = qz(d, &a.transpose())?;
        let mut blocks = Vec::new();
        let mut i = 0;
        while i < n {
            if i + 1 < n && s[(i + 1, i)] != 0.0 {
                blocks.push((i, 2));
                i += 2;
            } else {
                blocks.push((i, 1));
                i += 1;
            }
        }
        let scale = s.norm().max(t.norm());
        Ok(TSylvFactor {
            n,
            q,
            z,
            st: s.transpose(),
            tt: t.transpose(),
            s,
            t,
            blocks,
            scale,
        })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    /// Solve `D X + Xᵀ A = E`; returns `X` and the reciprocal condition estimate.
    pub fn solve(&self, e: &DenseMatrix) -> Result<(DenseMatrix, f64)> {
        let n = self.n;
        if e.shape() != (n, n) {
            return Err(shape_err(format!("rhs {:?}, expected {n}x{n}", e.shape())));
        }
        if n == 0 {
            return Ok((DMatrix::zeros(0, 0), 1.0));
        }
        if self.scale == 0.0 {
            return Err(Error::SingularOperator { rcond: 0.0 });
        }
        let f = self.q.transpose() * e * &self.q;
        let mut w = DMatrix::zeros(n, n);
        let mut rcond = f64::INFINITY;

        let nb = self.blocks.len();
        for bj in (0..nb).rev() {
            for bi in (0..=bj).rev() {
                let r = self.solve_pair(&f, &mut w, bi, bj)?;
                rcond = rcond.min(r);
            }
        }
        if rcond < RCOND_THRESHOLD {
            return Err(Error::SingularOperator { rcond });
        }
        Ok((&self.z * w * self.q.transpose(), rcond))
    }

    /// `F_ij − Σ_{k ≥ ki} S_ik W_kj − Σ_{k ≥ kj} W_ki T_jk`: the part of equation
    /// (i, j) not involving the unknown pair, with `ki`, `kj` the first indices
    /// past the blocks of `i` and `j`.
    fn rest(&self, f: &DenseMatrix, w: &DenseMatrix, i: usize, j: usize, ki: usize, kj: usize) -> f64 {
        let n = self.n;
        let mut r = f[(i, j)];
        // Column c of a column-major n×n matrix occupies [c n, (c + 1) n).
        if ki < n {
            let srow = &self.st.as_slice()[i * n + ki..(i + 1) * n];
            let wcol = &w.as_slice()[j * n + ki..(j + 1) * n];
            r -= dot(srow, wcol);
        }
        if kj < n {
            let trow = &self.tt.as_slice()[j * n + kj..(j + 1) * n];
            let wcol = &w.as_slice()[i * n + kj..(i + 1) * n];
            r -= dot(wcol, trow);
        }
        r
    }

    fn solve_pair(&self, f: &DenseMatrix, w: &mut DenseMatrix, bi: usize, bj: usize) -> Result<f64> {
        let (i0, si) = self.blocks[bi];
        let (j0, sj) = self.blocks[bj];
        let (ki, kj) = (i0 + si, j0 + sj);

        if si == 1 && sj == 1 {
            let (s_i, t_i) = (self.s[(i0, i0)], self.t[(i0, i0)]);
            if bi == bj {
                // (s + t) w = r
                let r = self.rest(f, w, i0, i0, ki, ki);
                let den = s_i + t_i;
                let rc = den.abs() / self.scale;
                if rc < RCOND_THRESHOLD {
                    return Err(Error::SingularOperator { rcond: rc });
                }
                w[(i0, i0)] = r / den;
                return Ok(rc);
            }
            // [s_i t_j; t_i s_j] [w_ij; w_ji] = [r1; r2]
            let (s_j, t_j) = (self.s[(j0, j0)], self.t[(j0, j0)]);
            let r1 = self.rest(f, w, i0, j0, ki, kj);
            let r2 = self.rest(f, w, j0, i0, kj, ki);
            let det = s_i * s_j - t_j * t_i;
            let fro2 = s_i * s_i + s_j * s_j + t_i * t_i + t_j * t_j;
            let smax = ((fro2 + (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt()) / 2.0).sqrt();
            let rc = if smax == 0.0 { 0.0 } else { det.abs() / smax / self.scale };
            if rc < RCOND_THRESHOLD {
                return Err(Error::SingularOperator { rcond: rc });
            }
            w[(i0, j0)] = (r1 * s_j - t_j * r2) / det;
            w[(j0, i0)] = (s_i * r2 - t_i * r1) / det;
            return Ok(rc);
        }

        // General case with at least one 2×2 block: assemble the small linear
        // map on the unknowns by applying it to unit vectors.
        let sii = self.s.view((i0, i0), (si, si)).into_owned();
        let tii = self.t.view((i0, i0), (si, si)).into_owned();
        let sjj = self.s.view((j0, j0), (sj, sj)).into_owned();
        let tjj = self.t.view((j0, j0), (sj, sj)).into_owned();
        let diag = bi == bj;
        let nu = if diag { si * si } else { 2 * si * sj };

        let apply = |u: &DVector<f64>| -> DVector<f64> {
            if diag {
                let x = DMatrix::from_column_slice(si, si, u.as_slice());
                let y = &sii * &x + x.transpose() * tii.transpose();
                DVector::from_column_slice(y.as_slice())
            } else {
                let wij = DMatrix::from_column_slice(si, sj, &u.as_slice()[..si * sj]);
                let wji = DMatrix::from_column_slice(sj, si, &u.as_slice()[si * sj..]);
                let y1 = &sii * &wij + wji.transpose() * tjj.transpose();
                let y2 = &sjj * &wji + wij.transpose() * tii.transpose();
                let mut out = DVector::zeros(nu);
                out.as_mut_slice()[..si * sj].copy_from_slice(y1.as_slice());
                out.as_mut_slice()[si * sj..].copy_from_slice(y2.as_slice());
                out
            }
        };
        let mut m = DMatrix::zeros(nu, nu);
        for c in 0..nu {
            let mut u = DVector::zeros(nu);
            u[c] = 1.0;
            m.set_column(c, &apply(&u));
        }

        let mut rhs = DVector::zeros(nu);
        if diag {
            for c in 0..si {
                for r in 0..si {
                    rhs[r + c * si] = self.rest(f, w, i0 + r, i0 + c, ki, ki);
                }
            }
        } else {
            for c in 0..sj {
                for r in 0..si {
                    rhs[r + c * si] = self.rest(f, w, i0 + r, j0 + c, ki, kj);
                }
            }
            for c in 0..si {
                for r in 0..sj {
                    rhs[si * sj + r + c * sj] = self.rest(f, w, j0 + r, i0 + c, kj, ki);
                }
            }
        }

        let smin = crate::svd::singular_values(&m)?.last().copied().unwrap_or(0.0);
        let rc = smin / self.scale;
        if rc < RCOND_THRESHOLD {
            return Err(Error::SingularOperator { rcond: rc });
        }
        let u = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("coupled block system".into()))?;
        if diag {
            for c in 0..si {
                for r in 0..si {
                    w[(i0 + r, i0 + c)] = u[r + c * si];
                }
            }
        } else {
            for c in 0..sj {
                for r in 0..si {
                    w[(i0 + r, j0 + c)] = u[r + c * si];
                }
            }
            for c in 0..si {
                for r in 0..sj {
                    w[(j0 + r, i0 + c)] = u[si * sj + r + c * sj];
                }
            }
        }
        Ok(rc)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators so the loop vectorizes.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// Real QZ: returns `(S, T, Q, Z)` with `a = Q S Zᵀ`, `b = Q T Zᵀ`.
fn qz(a: &DenseMatrix, b: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix, DenseMatrix, DenseMatrix)> {
    let n = a.nrows();
    let ni = n as i32;
    let mut s = a.clone();
    let mut t = b.clone();
    let mut q = DMatrix::zeros(n, n);
    let mut z = DMatrix::zeros(n, n);
    if n == 0 {
        return Ok((s, t, q, z));
    }
    if !s.iter().chain(t.iter()).all(|v| v.is_finite()) {
        return Err(Error::QzFailed(-1));
    }
    let mut alphar = vec![0.0; n];
    let mut alphai = vec![0.0; n];
    let mut beta = vec![0.0; n];
    let mut bwork = vec![0i32; n];
    let mut sdim = 0i32;
    let mut info = 0i32;
    let jv = b'V' as c_char;
    let jn = b'N' as c_char;
    let ld = ni.max(1);

    let mut query = [0.0f64];
    let mut lwork = -1i32;
    // SAFETY: every buffer has the length LAPACK expects for order n, and the
    // workspace query writes only query[0].
    unsafe {
        lapack_sys::dgges_(
            &jv, &jv, &jn, None, &ni,
            s.as_mut_ptr(), &ld, t.as_mut_ptr(), &ld, &mut sdim,
            alphar.as_mut_ptr(), alphai.as_mut_ptr(), beta.as_mut_ptr(),
            q.as_mut_ptr(), &ld, z.as_mut_ptr(), &ld,
            query.as_mut_ptr(), &lwork, bwork.as_mut_ptr(), &mut info,
        );
    }
    if info != 0 {
        return Err(Error::QzFailed(info));
    }
    lwork = (query[0] as i32).max(8 * ni + 16);
    let mut work = vec![0.0f64; lwork as usize];
    // SAFETY: as above, with a workspace of the queried size.
    unsafe {
        lapack_sys::dgges_(
            &jv, &jv, &jn, None, &ni,
            s.as_mut_ptr(), &ld, t.as_mut_ptr(), &ld, &mut sdim,
            alphar.as_mut_ptr(), alphai.as_mut_ptr(), beta.as_mut_ptr(),
            q.as_mut_ptr(), &ld, z.as_mut_ptr(), &ld,
            work.as_mut_ptr(), &lwork, bwork.as_mut_ptr(), &mut info,
        );
    }
    if info != 0 {
        return Err(Error::QzFailed(info));
    }
    Ok((s, t, q, z))
}

fn relative_residual(d: &DenseMatrix, a: &DenseMatrix, e: &DenseMatrix, x: &DenseMatrix) -> f64 {
    let r = (d * x + x.transpose() * a - e).norm();
    let en = e.norm();
    if en > 0.0 {
        r / en
    } else {
        r
    }
}

/// Solve `D X + Xᵀ A = E`.
///
/// One step of iterative refinement is applied when the first solve leaves a
/// relative residual above `1e-13`.
pub fn solve_tsylv_dense(eq: &TSylvEquation) -> Result<TSylvSolution> {
    solve_with(&eq.d, &eq.a, &eq.e)
}

fn solve_with(d: &DenseMatrix, a: &DenseMatrix, e: &DenseMatrix) -> Result<TSylvSolution> {
    let fac = TSylvFactor::new(d, a)?;
    let (mut x, rcond) = fac.solve(e)?;
    let mut rel = relative_residual(d, a, e, &x);
    if rel > 1e-13 {
        let r = e - (d * &x + x.transpose() * a);
        let (dx, _) = fac.solve(&r)?;
        let x2 = &x + dx;
        let rel2 = relative_residual(d, a, e, &x2);
        if rel2 < rel {
            x = x2;
            rel = rel2;
        }
    }
    Ok(TSylvSolution {
        x,
        rel_residual: rel,
        rcond,
    })
}

/// Solve `(D − U1) X + Xᵀ (A − U2) = E` with the shifted coefficients formed explicitly.
pub fn solve_tsylv_shifted(
    d: &DenseMatrix,
    a: &DenseMatrix,
    u1: &DenseMatrix,
    u2: &DenseMatrix,
    e: &DenseMatrix,
) -> Result<TSylvSolution> {
    if u1.shape() != d.shape() || u2.shape() != a.shape() {
        return Err(shape_err(format!(
            "shifts U1 {:?}, U2 {:?} for D {:?}, A {:?}",
            u1.shape(),
            u2.shape(),
            d.shape(),
            a.shape()
        )));
    }
    let eq = TSylvEquation::new(d - u1, a - u2, e.clone())?;
    solve_tsylv_dense(&eq)
}
