//! Dense partial-pivot LU used by the oracle and the exact inverse norm.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Pivots smaller than this multiple of `||A||_inf` are treated as zero.
pub(crate) const SINGULAR_RTOL: f64 = 1e-12;

pub(crate) struct Lu {
    lu: DMatrix<f64>,
    perm: Vec<usize>,
}

pub(crate) fn row_sum_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

impl Lu {
    pub(crate) fn factor(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        let tol = SINGULAR_RTOL * row_sum_norm(a);
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();

        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)]))
                .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
                .expect("non-empty pivot column");
            if pivot.abs() < tol || pivot == 0.0 {
                return Err(Error::SingularMatrix {
                    column: k,
                    pivot: pivot.abs(),
                    tolerance: tol,
                });
            }
            if p != k {
                lu.swap_rows(p, k);
                perm.swap(p, k);
            }
            for i in (k + 1)..n {
                let l = lu[(i, k)] / lu[(k, k)];
                lu[(i, k)] = l;
                for j in (k + 1)..n {
                    lu[(i, j)] -= l * lu[(k, j)];
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub(crate) fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.lu.nrows();
        let mut x = DVector::from_fn(n, |i, _| b[self.perm[i]]);
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }

    pub(crate) fn inverse(&self) -> DMatrix<f64> {
        let n = self.lu.nrows();
        let mut inv = DMatrix::zeros(n, n);
        for j in 0..n {
            let col = self.solve(&DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 }));
            inv.set_column(j, &col);
        }
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_with_row_exchange() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![5.0, 3.0, 5.0]);
        let x = Lu::factor(&a).unwrap().solve(&b);
        assert!((&a * &x - &b).amax() < 1e-14);
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = DMatrix::from_row_slice(2, 2, &[-4.0, -1.5, -2.0, -1.0]);
        let inv = Lu::factor(&a).unwrap().inverse();
        assert!((&a * &inv - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn rejects_rank_deficient() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(Lu::factor(&a), Err(Error::SingularMatrix { .. })));
        assert!(Lu::factor(&DMatrix::zeros(2, 2)).is_err());
    }
}
