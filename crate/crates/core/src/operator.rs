//! Linear operators `A` providing products and direct solves with `A` and `Aᵀ`.

use std::fmt::Debug;
use std::sync::{Arc, OnceLock};

use crate::error::{shape_err, Error, Result};
use crate::sparse::{CsrMatrix, SparseLu};
use crate::DenseMatrix;

pub trait LinearOperator: Send + Sync + Debug {
    fn dim(&self) -> usize;
    /// `A X`
    fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix>;
    /// `Aᵀ X`
    fn apply_transpose(&self, x: &DenseMatrix) -> Result<DenseMatrix>;
    /// `A⁻¹ X`
    fn solve(&self, x: &DenseMatrix) -> Result<DenseMatrix>;
    /// `A⁻ᵀ X`
    fn solve_transpose(&self, x: &DenseMatrix) -> Result<DenseMatrix>;
    /// Dense copy, for checks at desk scale.
    fn to_dense(&self) -> DenseMatrix;
}

pub type OperatorRef = Arc<dyn LinearOperator>;

fn check_rows(n: usize, x: &DenseMatrix) -> Result<()> {
    if x.nrows() != n {
        return Err(shape_err(format!("operator of order {n} applied to {:?}", x.shape())));
    }
    Ok(())
}

/// Sparse matrix with a lazily computed, shared LU factorization.
#[derive(Debug)]
pub struct SparseOperator {
    a: CsrMatrix,
    lu: OnceLock<std::result::Result<SparseLu, String>>,
}

impl SparseOperator {
    pub fn new(a: CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(shape_err(format!("operator must be square, got {}x{}", a.nrows(), a.ncols())));
        }
        Ok(SparseOperator { a, lu: OnceLock::new() })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.a
    }

    /// Factorize now (otherwise the first solve does).
    pub fn factorize(&self) -> Result<&SparseLu> {
        self.lu
            .get_or_init(|| SparseLu::factor(&self.a).map_err(|e| e.to_string()))
            .as_ref()
            .map_err(|e| Error::Singular(e.clone()))
    }

    fn solve_with(&self, x: &DenseMatrix, transpose: bool) -> Result<DenseMatrix> {
        check_rows(self.dim(), x)?;
        let lu = self.factorize()?;
        let mut out = x.clone();
        let mut work = vec![0.0; self.dim()];
        for mut col in out.column_iter_mut() {
            let s = col.as_mut_slice();
            if transpose {
                lu.solve_transpose_in_place(s, &mut work);
            } else {
                lu.solve_in_place(s, &mut work);
            }
        }
        Ok(out)
    }
}

impl LinearOperator for SparseOperator {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.a.mul_dense(x)
    }

    fn apply_transpose(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.a.mul_dense_transpose(x)
    }

    fn solve(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.solve_with(x, false)
    }

    fn solve_transpose(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.solve_with(x, true)
    }

    fn to_dense(&self) -> DenseMatrix {
        self.a.to_dense()
    }
}

/// Dense matrix with its LU factorization.
#[derive(Debug)]
pub struct DenseOperator {
    a: DenseMatrix,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    lu_t: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl DenseOperator {
    pub fn new(a: DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(shape_err(format!("operator must be square, got {:?}", a.shape())));
        }
        let lu = a.clone().lu();
        let lu_t = a.transpose().lu();
        Ok(DenseOperator { a, lu, lu_t })
    }
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        check_rows(self.dim(), x)?;
        Ok(&self.a * x)
    }

    fn apply_transpose(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        check_rows(self.dim(), x)?;
        Ok(self.a.tr_mul(x))
    }

    fn solve(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        check_rows(self.dim(), x)?;
        self.lu.solve(x).ok_or_else(|| Error::Singular("dense operator".into()))
    }

    fn solve_transpose(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        check_rows(self.dim(), x)?;
        self.lu_t.solve(x).ok_or_else(|| Error::Singular("dense operator".into()))
    }

    fn to_dense(&self) -> DenseMatrix {
        self.a.clone()
    }
}

/// `Aᵀ` viewed as an operator.
#[derive(Debug, Clone)]
pub struct Transposed(pub OperatorRef);

impl LinearOperator for Transposed {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.0.apply_transpose(x)
    }
    fn apply_transpose(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.0.apply(x)
    }
    fn solve(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.0.solve_transpose(x)
    }
    fn solve_transpose(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.0.solve(x)
    }
    fn to_dense(&self) -> DenseMatrix {
        self.0.to_dense().transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn ops() -> (DenseMatrix, Vec<OperatorRef>) {
        let a = dmatrix![4.0, 1.0, 0.0; -1.0, 3.0, 2.0; 0.5, 0.0, 5.0];
        let sparse: OperatorRef = Arc::new(SparseOperator::new(CsrMatrix::from_dense(&a)).unwrap());
        let dense: OperatorRef = Arc::new(DenseOperator::new(a.clone()).unwrap());
        let trans: OperatorRef = Arc::new(Transposed(Arc::new(DenseOperator::new(a.transpose()).unwrap())));
        (a, vec![sparse, dense, trans])
    }

    #[test]
    fn all_routes_agree() {
        let (a, ops) = ops();
        let x = dmatrix![1.0, 0.0; 2.0, -1.0; 3.0, 0.5];
        let inv = a.clone().try_inverse().unwrap();
        for op in ops {
            assert_eq!(op.dim(), 3);
            assert!((op.apply(&x).unwrap() - &a * &x).norm() < 1e-14);
            assert!((op.apply_transpose(&x).unwrap() - a.transpose() * &x).norm() < 1e-14);
            assert!((op.solve(&x).unwrap() - &inv * &x).norm() < 1e-13);
            assert!((op.solve_transpose(&x).unwrap() - inv.transpose() * &x).norm() < 1e-13);
            assert!((op.to_dense() - &a).norm() < 1e-15);
            assert!(op.apply(&DenseMatrix::zeros(2, 1)).is_err());
        }
    }

    #[test]
    fn singular_sparse_operator_fails_on_solve() {
        let op = SparseOperator::new(CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0)]).unwrap()).unwrap();
        assert!(op.apply(&DenseMatrix::identity(2, 1)).is_ok());
        assert!(matches!(op.solve(&DenseMatrix::identity(2, 1)), Err(Error::Singular(_))));
    }
}
