//! Thin singular value decomposition through LAPACK `dgesvd`.

use std::os::raw::c_char;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::DenseMatrix;

/// `A = U diag(s) Vᵀ` with `s` in descending order; `U` is `m × k`, `Vᵀ` is `k × n`, `k = min(m, n)`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub vt: DenseMatrix,
}

fn gesvd(a: &DenseMatrix, vectors: bool) -> Result<(Vec<f64>, DenseMatrix, DenseMatrix)> {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return Ok((Vec::new(), DMatrix::zeros(m, 0), DMatrix::zeros(0, n)));
    }
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::Singular("SVD of a matrix with non-finite entries".into()));
    }
    let mut work_a = a.clone();
    let mut s = vec![0.0; k];
    let (mut u, mut vt) = if vectors {
        (DMatrix::zeros(m, k), DMatrix::zeros(k, n))
    } else {
        (DMatrix::zeros(1, 1), DMatrix::zeros(1, 1))
    };
    let job = if vectors { b'S' } else { b'N' } as c_char;
    let (mi, ni) = (m as i32, n as i32);
    let ldu = if vectors { mi } else { 1 };
    let ldvt = if vectors { k as i32 } else { 1 };
    let mut info = 0i32;
    let mut query = [0.0f64];
    let mut lwork = -1i32;
    // SAFETY: buffers are sized for an m×n input with job 'S' (U m×k, Vᵀ k×n)
    // or 'N' (U, Vᵀ unreferenced); the query call writes only query[0].
    unsafe {
        lapack_sys::dgesvd_(
            &job, &job, &mi, &ni, work_a.as_mut_ptr(), &mi, s.as_mut_ptr(),
            u.as_mut_ptr(), &ldu, vt.as_mut_ptr(), &ldvt, query.as_mut_ptr(), &lwork, &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Singular(format!("dgesvd workspace query failed ({info})")));
    }
    lwork = (query[0] as i32).max(5 * (mi.max(ni)) + 1);
    let mut work = vec![0.0f64; lwork as usize];
    // SAFETY: as above with a workspace of the queried size.
    unsafe {
        lapack_sys::dgesvd_(
            &job, &job, &mi, &ni, work_a.as_mut_ptr(), &mi, s.as_mut_ptr(),
            u.as_mut_ptr(), &ldu, vt.as_mut_ptr(), &ldvt, work.as_mut_ptr(), &lwork, &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Singular(format!("dgesvd did not converge ({info})")));
    }
    Ok((s, u, vt))
}

pub fn svd(a: &DenseMatrix) -> Result<Svd> {
    let (s, u, vt) = gesvd(a, true)?;
    Ok(Svd { u, s, vt })
}

/// Singular values in descending order.
pub fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>> {
    Ok(gesvd(a, false)?.0)
}
