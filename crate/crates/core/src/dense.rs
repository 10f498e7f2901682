//! Dense substrate: elementwise order, vec/commutation utilities, M-matrix
//! classification and the Kronecker-system oracle for T-Sylvester equations.

use nalgebra::{DMatrix, DVector};

use crate::error::{shape_err, Error, Result};
use crate::DenseMatrix;

/// Largest order accepted by [`tsylv_oracle_solve`].
pub const ORACLE_CAP: usize = 64;

/// `vec(X)`: stack the columns of `x`.
pub fn vec(x: &DenseMatrix) -> DVector<f64> {
    DVector::from_column_slice(x.as_slice())
}

/// Inverse of [`vec`] for an `rows × cols` matrix.
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> Result<DenseMatrix> {
    if v.len() != rows * cols {
        return Err(shape_err(format!(
            "vector of length {} cannot be reshaped to {rows}x{cols}",
            v.len()
        )));
    }
    Ok(DMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Default order tolerance `1e-12 · max(1, ‖m‖_F)`.
pub fn default_order_tol(m: &DenseMatrix) -> f64 {
    1e-12 * m.norm().max(1.0)
}

/// `m ≤ n` entrywise, up to `tol`.
pub fn elementwise_leq(m: &DenseMatrix, n: &DenseMatrix, tol: f64) -> Result<bool> {
    if m.shape() != n.shape() {
        return Err(shape_err(format!(
            "elementwise_leq: {:?} vs {:?}",
            m.shape(),
            n.shape()
        )));
    }
    Ok(m.iter().zip(n.iter()).all(|(a, b)| b - a >= -tol))
}

/// `x ≥ -tol` entrywise.
pub fn is_nonnegative(x: &DenseMatrix, tol: f64) -> bool {
    x.iter().all(|&v| v >= -tol)
}

/// Most negative entry of `x`, or 0 if none is negative.
pub fn min_entry(x: &DenseMatrix) -> f64 {
    x.iter().copied().fold(0.0, f64::min)
}

pub fn all_finite(x: &DenseMatrix) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// The n²×n² permutation Π with `Π vec(X) = vec(Xᵀ)`.
pub fn commutation_matrix(n: usize) -> DenseMatrix {
    let nn = n * n;
    let mut pi = DMatrix::zeros(nn, nn);
    for j in 0..n {
        for i in 0..n {
            pi[(i + j * n, j + i * n)] = 1.0;
        }
    }
    pi
}

fn check_square_pair(d: &DenseMatrix, a: &DenseMatrix) -> Result<usize> {
    let n = d.nrows();
    if !d.is_square() || a.shape() != (n, n) {
        return Err(shape_err(format!(
            "D {:?} and A {:?} must be square of equal order",
            d.shape(),
            a.shape()
        )));
    }
    Ok(n)
}

/// `I ⊗ D + (Aᵀ ⊗ I) Π`, the matrix of `X ↦ DX + XᵀA` acting on `vec(X)`.
pub fn tsylv_kron_matrix(d: &DenseMatrix, a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = check_square_pair(d, a)?;
    let nn = n * n;
    let mut m = DMatrix::zeros(nn, nn);
    // Row (i, j) of the output, column (k, l) of the input X.
    for j in 0..n {
        for i in 0..n {
            let row = i + j * n;
            for k in 0..n {
                m[(row, k + j * n)] += d[(i, k)];
                m[(row, k + i * n)] += a[(k, j)];
            }
        }
    }
    Ok(m)
}

/// Evidence attached to an M-matrix classification.
#[derive(Debug, Clone, PartialEq)]
pub enum Certificate {
    /// `v ≥ 0` with `M v > 0`.
    Vector(DVector<f64>),
    /// Splitting `M = sI − N` and the computed `ρ(N)`.
    Spectral { s: f64, rho: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixClass {
    pub is_z_matrix: bool,
    pub is_nonsingular_m_matrix: bool,
    pub certificate: Option<Certificate>,
}

/// Classify a square matrix as Z-matrix / nonsingular M-matrix.
///
/// Off-diagonal entries up to `tol` count as nonpositive.
pub fn classify_m_matrix(m: &DenseMatrix, tol: f64) -> MatrixClass {
    let n = m.nrows();
    let not_z = MatrixClass {
        is_z_matrix: false,
        is_nonsingular_m_matrix: false,
        certificate: None,
    };
    if !m.is_square() || n == 0 {
        return not_z;
    }
    let is_z = (0..n).all(|j| (0..n).all(|i| i == j || m[(i, j)] <= tol));
    if !is_z {
        return not_z;
    }

    let s = (0..n).map(|i| m[(i, i)]).fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let mut nmat = -m.clone();
    for i in 0..n {
        nmat[(i, i)] += s;
    }
    nmat.iter_mut().for_each(|v| *v = v.max(0.0));

    let rho = match nonnegative_spectral_radius(&nmat) {
        Ok(r) => r,
        Err(_) => {
            return MatrixClass {
                is_z_matrix: true,
                is_nonsingular_m_matrix: false,
                certificate: None,
            }
        }
    };
    let spectral = Certificate::Spectral { s, rho };
    if rho >= s {
        return MatrixClass {
            is_z_matrix: true,
            is_nonsingular_m_matrix: false,
            certificate: Some(spectral),
        };
    }

    // v = M⁻¹ 1 is nonnegative for a nonsingular M-matrix, and M v = 1 > 0.
    let cert = m.clone().lu().solve(&DVector::from_element(n, 1.0)).and_then(|v| {
        let v = v.map(|x| x.max(0.0));
        let mv = m * &v;
        mv.iter().all(|&x| x > 0.0).then_some(v)
    });
    match cert {
        Some(v) => MatrixClass {
            is_z_matrix: true,
            is_nonsingular_m_matrix: true,
            certificate: Some(Certificate::Vector(v)),
        },
        None => MatrixClass {
            is_z_matrix: true,
            is_nonsingular_m_matrix: false,
            certificate: Some(spectral),
        },
    }
}

/// ρ(N) for entrywise nonnegative N: power iteration on N + I with
/// Collatz–Wielandt bounds, falling back to a dense eigen-solve.
fn nonnegative_spectral_radius(nmat: &DenseMatrix) -> Result<f64> {
    const REL_TOL: f64 = 1e-8;
    const MAX_IT: usize = 10_000;
    const STALL: usize = 200;

    let n = nmat.nrows();
    let mut shifted = nmat.clone();
    for i in 0..n {
        shifted[(i, i)] += 1.0;
    }
    let mut x = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut best_gap = f64::INFINITY;
    let mut since_improved = 0;
    for _ in 0..MAX_IT {
        let y = &shifted * &x;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        for i in 0..n {
            if x[i] <= f64::MIN_POSITIVE {
                lo = f64::NAN;
                break;
            }
            let r = y[i] / x[i];
            lo = lo.min(r);
            hi = hi.max(r);
        }
        if lo.is_nan() {
            break;
        }
        let gap = hi - lo;
        if gap <= REL_TOL * hi {
            return Ok(0.5 * (lo + hi) - 1.0);
        }
        if gap < 0.999 * best_gap {
            best_gap = gap;
            since_improved = 0;
        } else {
            since_improved += 1;
            if since_improved > STALL {
                break;
            }
        }
        let ny = y.norm();
        if ny == 0.0 || !ny.is_finite() {
            break;
        }
        x = y / ny;
    }
    spectral_radius(nmat)
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DenseMatrix) -> Result<f64> {
    if !m.is_square() {
        return Err(shape_err(format!("spectral_radius of {:?}", m.shape())));
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    if !all_finite(m) {
        return Err(Error::NoConvergence("eigenvalues of a matrix with non-finite entries".into()));
    }
    let n = m.nrows() as i32;
    let mut a = m.clone();
    let (mut wr, mut wi) = (vec![0.0; m.nrows()], vec![0.0; m.nrows()]);
    let mut dummy = [0.0f64];
    let one = 1i32;
    let job = b'N' as std::os::raw::c_char;
    let mut info = 0i32;
    let mut query = [0.0f64];
    let mut lwork = -1i32;
    // SAFETY: `a` is n×n column-major, wr/wi have length n, eigenvectors are
    // not referenced (job 'N', leading dimension 1); the first call only
    // writes the workspace size into `query`.
    unsafe {
        lapack_sys::dgeev_(
            &job, &job, &n, a.as_mut_ptr(), &n, wr.as_mut_ptr(), wi.as_mut_ptr(),
            dummy.as_mut_ptr(), &one, dummy.as_mut_ptr(), &one, query.as_mut_ptr(), &lwork, &mut info,
        );
    }
    lwork = (query[0] as i32).max(3 * n.max(1));
    let mut work = vec![0.0f64; lwork as usize];
    if info == 0 {
        // SAFETY: as above with a workspace of the queried size.
        unsafe {
            lapack_sys::dgeev_(
                &job, &job, &n, a.as_mut_ptr(), &n, wr.as_mut_ptr(), wi.as_mut_ptr(),
                dummy.as_mut_ptr(), &one, dummy.as_mut_ptr(), &one, work.as_mut_ptr(), &lwork, &mut info,
            );
        }
    }
    if info != 0 {
        return Err(Error::NoConvergence(format!("dgeev (info = {info})")));
    }
    Ok(wr.iter().zip(&wi).map(|(r, i)| r.hypot(*i)).fold(0.0, f64::max))
}

/// Solve `D X + Xᵀ A = rhs` through the n²×n² Kronecker system.
pub fn tsylv_oracle_solve(d: &DenseMatrix, a: &DenseMatrix, rhs: &DenseMatrix) -> Result<DenseMatrix> {
    let n = check_square_pair(d, a)?;
    if rhs.shape() != (n, n) {
        return Err(shape_err(format!("rhs {:?}, expected {n}x{n}", rhs.shape())));
    }
    if n > ORACLE_CAP {
        return Err(Error::OverOracleCap { n, cap: ORACLE_CAP });
    }
    let k = tsylv_kron_matrix(d, a)?;
    let x = k
        .lu()
        .solve(&vec(rhs))
        .ok_or_else(|| Error::Singular("Kronecker T-Sylvester system".into()))?;
    unvec(&x, n, n)
}

/// `D X + Xᵀ A`.
pub fn tsylv_apply(d: &DenseMatrix, a: &DenseMatrix, x: &DenseMatrix) -> DenseMatrix {
    d * x + x.transpose() * a
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, m: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        DMatrix::from_fn(n, m, |_, _| rng.random::<f64>() - 0.5)
    }

    #[test]
    fn leq_examples() {
        let z = DMatrix::zeros(2, 2);
        assert!(elementwise_leq(&z, &z, 0.0).unwrap());
        let m = dmatrix![1.0, 2.0; 3.0, 4.0];
        let n = dmatrix![1.0, 2.0; 3.0, 3.0];
        assert!(!elementwise_leq(&m, &n, 0.0).unwrap());
        let n = dmatrix![-1e-14, 0.0; 0.0, 0.0];
        assert!(elementwise_leq(&z, &n, 1e-12).unwrap());
        assert!(elementwise_leq(&z, &DMatrix::zeros(2, 3), 0.0).is_err());
    }

    #[test]
    fn commutation_small() {
        assert_eq!(commutation_matrix(1), dmatrix![1.0]);
        let p = commutation_matrix(2);
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!((p * v).as_slice(), &[1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn kron_matrix_examples() {
        assert_eq!(tsylv_kron_matrix(&dmatrix![2.0], &dmatrix![1.0]).unwrap(), dmatrix![3.0]);
        let k = tsylv_kron_matrix(&DMatrix::identity(2, 2), &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(k, DMatrix::identity(4, 4));
        assert!(tsylv_kron_matrix(&DMatrix::identity(2, 2), &DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn kron_matrix_matches_kronecker_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4;
        let d = random(n, n, &mut rng);
        let a = random(n, n, &mut rng);
        let eye = DMatrix::<f64>::identity(n, n);
        let reference = eye.kronecker(&d) + a.transpose().kronecker(&eye) * commutation_matrix(n);
        assert_relative_eq!(tsylv_kron_matrix(&d, &a).unwrap(), reference, epsilon = 1e-14);
    }

    #[test]
    fn classify_examples() {
        let c = classify_m_matrix(&dmatrix![2.0, -1.0; -1.0, 2.0], 0.0);
        assert!(c.is_z_matrix && c.is_nonsingular_m_matrix);
        match c.certificate {
            Some(Certificate::Vector(v)) => assert_relative_eq!(v[0], 1.0, epsilon = 1e-12),
            other => panic!("unexpected certificate {other:?}"),
        }

        let c = classify_m_matrix(&dmatrix![1.0, -2.0; -2.0, 1.0], 0.0);
        assert!(c.is_z_matrix && !c.is_nonsingular_m_matrix);
        match c.certificate {
            Some(Certificate::Spectral { s, rho }) => {
                assert_relative_eq!(s, 2.0, epsilon = 1e-12);
                // N = [[1,2],[2,1]], ρ = 3
                assert_relative_eq!(rho, 3.0, epsilon = 1e-7);
            }
            other => panic!("unexpected certificate {other:?}"),
        }

        let c = classify_m_matrix(&dmatrix![1.0, 1.0; 0.0, 1.0], 0.0);
        assert!(!c.is_z_matrix && !c.is_nonsingular_m_matrix);
    }

    #[test]
    fn classify_reducible_and_singular() {
        // Triangular, reducible: power iteration cannot close the bounds.
        let m = dmatrix![1.0, -5.0; 0.0, 2.0];
        assert!(classify_m_matrix(&m, 0.0).is_nonsingular_m_matrix);
        // Singular M-matrix (Laplacian of a path).
        let m = dmatrix![1.0, -1.0; -1.0, 1.0];
        assert!(!classify_m_matrix(&m, 0.0).is_nonsingular_m_matrix);
    }

    #[test]
    fn spectral_radius_examples() {
        assert_relative_eq!(spectral_radius(&DMatrix::identity(2, 2)).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(spectral_radius(&dmatrix![0.0, 1.0; 0.0, 0.0]).unwrap(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(spectral_radius(&dmatrix![2.0, 2.0; 2.0, 2.0]).unwrap(), 4.0, epsilon = 1e-12);
        // Rotation: complex pair of modulus 2.
        assert_relative_eq!(spectral_radius(&dmatrix![0.0, -2.0; 2.0, 0.0]).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn oracle_examples() {
        let x = tsylv_oracle_solve(&dmatrix![2.0], &dmatrix![1.0], &dmatrix![3.0]).unwrap();
        assert_relative_eq!(x[(0, 0)], 1.0, epsilon = 1e-14);
        let x = tsylv_oracle_solve(
            &(DMatrix::identity(2, 2) * 3.0),
            &DMatrix::zeros(2, 2),
            &dmatrix![3.0, 6.0; 9.0, 12.0],
        )
        .unwrap();
        assert_relative_eq!(x, dmatrix![1.0, 2.0; 3.0, 4.0], epsilon = 1e-14);
    }

    #[test]
    fn oracle_rejects_singular_and_oversized() {
        let z = DMatrix::zeros(2, 2);
        assert!(matches!(tsylv_oracle_solve(&z, &z, &z), Err(Error::Singular(_))));
        let n = ORACLE_CAP + 1;
        let big = DMatrix::identity(n, n);
        assert!(matches!(
            tsylv_oracle_solve(&big, &big, &big),
            Err(Error::OverOracleCap { .. })
        ));
    }

    fn mmatrix_pair(n: usize, rng: &mut ChaCha8Rng) -> (DenseMatrix, DenseMatrix) {
        let a = DMatrix::from_fn(n, n, |_, _| -0.3 * rng.random::<f64>());
        let mut d = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { -rng.random::<f64>() });
        let acol = (0..n).map(|j| a.column(j).abs().sum()).fold(0.0, f64::max);
        for i in 0..n {
            let off = d.row(i).abs().sum();
            d[(i, i)] = off + acol + 0.1 + rng.random::<f64>();
        }
        (d, a)
    }

    #[test]
    fn oracle_random_mmatrix_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (d, a) = mmatrix_pair(4, &mut rng);
        let rhs = random(4, 4, &mut rng);
        let x = tsylv_oracle_solve(&d, &a, &rhs).unwrap();
        assert!((tsylv_apply(&d, &a, &x) - &rhs).norm() <= 1e-10 * rhs.norm());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn commutation_transposes(n in 1usize..=6, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random(n, n, &mut rng);
            let p = commutation_matrix(n);
            prop_assert_eq!(&p * vec(&x), vec(&x.transpose()));
            prop_assert_eq!(&p * &p, DMatrix::identity(n * n, n * n));
        }

        #[test]
        fn kron_matrix_applies_operator(n in 1usize..=6, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = random(n, n, &mut rng);
            let a = random(n, n, &mut rng);
            let x = random(n, n, &mut rng);
            let lhs = tsylv_kron_matrix(&d, &a).unwrap() * vec(&x);
            let rhs = vec(&tsylv_apply(&d, &a, &x));
            prop_assert!((lhs - &rhs).norm() <= 1e-14 * (1.0 + rhs.norm()));
        }

        #[test]
        fn certificate_is_valid(n in 1usize..=5, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = DMatrix::from_fn(n, n, |i, j| {
                if i == j { 2.0 * rng.random::<f64>() } else { -rng.random::<f64>() }
            });
            let c = classify_m_matrix(&m, 0.0);
            prop_assert!(!c.is_nonsingular_m_matrix || c.is_z_matrix);
            if let Some(Certificate::Vector(v)) = &c.certificate {
                prop_assert!(c.is_nonsingular_m_matrix);
                prop_assert!(v.iter().all(|&x| x >= 0.0));
                prop_assert!((&m * v).iter().all(|&x| x > 0.0));
            }
        }

        #[test]
        fn comparison_property(n in 1usize..=5, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (d, a) = mmatrix_pair(n, &mut rng);
            let m = tsylv_kron_matrix(&d, &a).unwrap();
            prop_assume!(classify_m_matrix(&m, 0.0).is_nonsingular_m_matrix);
            // Z ≥ M, still a Z-matrix: grow diagonals, shrink off-diagonal magnitudes.
            let z = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
                let t = rng.random::<f64>();
                if i == j { m[(i, j)] + t } else { m[(i, j)] * (1.0 - t) }
            });
            prop_assert!(classify_m_matrix(&z, 0.0).is_nonsingular_m_matrix);
        }

        #[test]
        fn inverse_is_nonnegative(n in 1usize..=5, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (d, a) = mmatrix_pair(n, &mut rng);
            prop_assert!(classify_m_matrix(&tsylv_kron_matrix(&d, &a).unwrap(), 0.0).is_nonsingular_m_matrix);
            let rhs = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>());
            let x = tsylv_oracle_solve(&d, &a, &rhs).unwrap();
            prop_assert!(x.iter().all(|&v| v >= -1e-12));
        }
    }
}
