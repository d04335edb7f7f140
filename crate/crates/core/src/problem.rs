//! Problem representation, infinity-norm machinery, range-safety scaling and
//! the direct-solve oracle.
//!
//! The solver circuit represents every signal as a voltage in `[-0.5, 0.5]`.
//! With `|b_i| <= 0.5`, multiplying `A` by a factor of at least `||A^-1||_inf`
//! guarantees the scaled solution `y` obeys `max|y| <= 0.5`; the original
//! solution is recovered as `x = y * factor`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{row_sum_norm, Lu};

/// Largest input magnitude the circuit accepts, in volts.
pub const SIGNAL_LIMIT: f64 = 0.5;

/// Default `C` in the estimate `||A^-1||_inf <~ C / ||A||_inf`.
pub const DEFAULT_KAPPA_BOUND: f64 = 1e3;

/// A square system `A x = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProblem {
    a: DMatrix<f64>,
    b: DVector<f64>,
    symmetric: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProblemDoc {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    symmetric: bool,
}

impl LinearProblem {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Err(Error::InvalidProblem("empty matrix".into()));
        }
        if a.ncols() != n {
            return Err(Error::InvalidProblem(format!(
                "matrix is {}x{}, expected square",
                n,
                a.ncols()
            )));
        }
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                if !a[(i, j)].is_finite() {
                    return Err(Error::NonFiniteEntry { row: i, col: j });
                }
            }
            if !b[i].is_finite() {
                return Err(Error::NonFiniteEntry { row: i, col: n });
            }
        }
        Ok(Self {
            a,
            b,
            symmetric: false,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], b: &[f64]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::InvalidProblem(format!(
                "row of length {} in a {}-row matrix",
                bad.len(),
                n
            )));
        }
        let a = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::new(a, DVector::from_column_slice(b))
    }

    /// Marks the problem symmetric; fails unless `A == A^T` exactly.
    pub fn with_symmetric(mut self, symmetric: bool) -> Result<Self> {
        if symmetric && self.a != self.a.transpose() {
            return Err(Error::InvalidProblem(
                "symmetric flag set but A != A^T".into(),
            ));
        }
        self.symmetric = symmetric;
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ProblemDoc = serde_json::from_str(text)?;
        Self::from_rows(&doc.a, &doc.b)?.with_symmetric(doc.symmetric)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("problem serializes")
    }

    fn to_doc(&self) -> ProblemDoc {
        ProblemDoc {
            a: self
                .a
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            b: self.b.iter().copied().collect(),
            symmetric: self.symmetric,
        }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn symmetric(&self) -> bool {
        self.symmetric
    }

    /// `(-A, -b)`: same solution, opposite sign pattern.
    pub fn negated(&self) -> Self {
        Self {
            a: -&self.a,
            b: -&self.b,
            symmetric: self.symmetric,
        }
    }

    /// Fails with [`Error::RangeViolation`] on the first `|b_i| > 0.5`.
    pub fn check_input_range(&self) -> Result<()> {
        match self.b.iter().position(|v| v.abs() > SIGNAL_LIMIT) {
            Some(index) => Err(Error::RangeViolation {
                index,
                value: self.b[index],
            }),
            None => Ok(()),
        }
    }
}

impl Serialize for LinearProblem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_doc().serialize(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum ScalePolicy {
    /// `factor = max(||A^-1||_inf, 1)`.
    Exact,
    /// `factor = kappa_bound / ||A||_inf`, trusting a-priori conditioning.
    Estimate { kappa_bound: f64 },
}

impl ScalePolicy {
    pub fn estimate() -> Self {
        ScalePolicy::Estimate {
            kappa_bound: DEFAULT_KAPPA_BOUND,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaledProblem {
    #[serde(skip)]
    pub original: LinearProblem,
    #[serde(skip)]
    pub scaled_a: DMatrix<f64>,
    pub policy: ScalePolicy,
    pub factor_scale: f64,
    pub a_inf_norm: f64,
    pub a_inv_inf_norm: f64,
    pub kappa_inf: f64,
    /// `factor_scale >= ||A^-1||_inf`; always true under [`ScalePolicy::Exact`].
    pub range_safe: bool,
}

impl ScaledProblem {
    /// The system the circuit actually solves: `(A * factor) y = b`.
    pub fn scaled_problem(&self) -> LinearProblem {
        LinearProblem {
            a: self.scaled_a.clone(),
            b: self.original.b.clone(),
            symmetric: self.original.symmetric,
        }
    }
}

/// Maximum absolute row sum.
pub fn inf_norm(a: &DMatrix<f64>) -> f64 {
    row_sum_norm(a)
}

/// `||A^-1||_inf` from an explicit inverse.
pub fn inv_inf_norm(a: &DMatrix<f64>) -> Result<f64> {
    Ok(row_sum_norm(&Lu::factor(a)?.inverse()))
}

pub fn scale_problem(p: &LinearProblem, policy: ScalePolicy) -> Result<ScaledProblem> {
    p.check_input_range()?;
    let a_inf_norm = inf_norm(&p.a);
    let a_inv_inf_norm = inv_inf_norm(&p.a)?;
    let factor_scale = match policy {
        ScalePolicy::Exact => a_inv_inf_norm.max(1.0),
        ScalePolicy::Estimate { kappa_bound } => {
            if !(kappa_bound > 0.0 && kappa_bound.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "kappa bound must be positive, got {kappa_bound}"
                )));
            }
            kappa_bound / a_inf_norm
        }
    };
    Ok(ScaledProblem {
        original: p.clone(),
        scaled_a: &p.a * factor_scale,
        policy,
        factor_scale,
        a_inf_norm,
        a_inv_inf_norm,
        kappa_inf: a_inf_norm * a_inv_inf_norm,
        range_safe: factor_scale >= a_inv_inf_norm,
    })
}

/// Maps a solution of the scaled system back to the original: `x = y * factor`.
pub fn unscale_solution(sp: &ScaledProblem, y: &DVector<f64>) -> Result<DVector<f64>> {
    if y.len() != sp.original.n() {
        return Err(Error::DimensionMismatch {
            expected: sp.original.n(),
            found: y.len(),
        });
    }
    Ok(y * sp.factor_scale)
}

/// Partial-pivot elimination with one step of iterative refinement.
pub fn direct_solve_oracle(p: &LinearProblem) -> Result<DVector<f64>> {
    let lu = Lu::factor(&p.a)?;
    let mut x = lu.solve(&p.b);
    let r = &p.b - &p.a * &x;
    x += lu.solve(&r);
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> LinearProblem {
        LinearProblem::from_rows(&[vec![-4.0, -1.5], vec![-2.0, -1.0]], &[0.45, 0.24]).unwrap()
    }

    #[test]
    fn inf_norm_examples() {
        assert_eq!(inf_norm(fixture().a()), 5.5);
        assert_eq!(inf_norm(&DMatrix::identity(2, 2)), 1.0);
        assert_eq!(inf_norm(&DMatrix::zeros(3, 3)), 0.0);
    }

    #[test]
    fn inv_inf_norm_examples() {
        // A^-1 = [[-1, 1.5], [2, -4]] (det 1): row sums 2.5 and 6.
        assert!((inv_inf_norm(fixture().a()).unwrap() - 6.0).abs() < 1e-12);
        assert_eq!(inv_inf_norm(&DMatrix::identity(3, 3)).unwrap(), 1.0);
        let d = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        assert_eq!(inv_inf_norm(&d).unwrap(), 0.5);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            inv_inf_norm(&s),
            Err(Error::SingularMatrix { .. })
        ));
        let p = LinearProblem::new(s, DVector::from_vec(vec![0.1, 0.1])).unwrap();
        assert!(matches!(
            direct_solve_oracle(&p),
            Err(Error::SingularMatrix { .. })
        ));
    }

    #[test]
    fn exact_scaling_of_fixture() {
        let sp = scale_problem(&fixture(), ScalePolicy::Exact).unwrap();
        assert!((sp.factor_scale - 6.0).abs() < 1e-12);
        assert!((inv_inf_norm(&sp.scaled_a).unwrap() - 1.0).abs() < 1e-12);
        assert!((sp.kappa_inf - 33.0).abs() < 1e-9);
        assert!(sp.range_safe);
        let y = direct_solve_oracle(&sp.scaled_problem()).unwrap();
        assert!(y.amax() <= 0.5);
    }

    #[test]
    fn identity_scales_by_one() {
        let p = LinearProblem::new(DMatrix::identity(2, 2), DVector::from_vec(vec![0.5, -0.5]))
            .unwrap();
        let sp = scale_problem(&p, ScalePolicy::Exact).unwrap();
        assert_eq!(sp.factor_scale, 1.0);
        assert_eq!(sp.scaled_a, DMatrix::identity(2, 2));
    }

    #[test]
    fn estimate_policy() {
        let sp = scale_problem(&fixture(), ScalePolicy::estimate()).unwrap();
        assert!((sp.factor_scale - 1e3 / 5.5).abs() < 1e-9);
        assert!((sp.factor_scale - 181.818).abs() < 1e-3);
    }

    #[test]
    fn out_of_range_input_is_an_error() {
        let p = LinearProblem::from_rows(&[vec![1.0]], &[0.6]).unwrap();
        assert!(matches!(
            scale_problem(&p, ScalePolicy::Exact),
            Err(Error::RangeViolation { index: 0, .. })
        ));
    }

    #[test]
    fn unscale_examples() {
        let sp = scale_problem(&fixture(), ScalePolicy::Exact).unwrap();
        let x = unscale_solution(&sp, &DVector::from_vec(vec![-0.015, -0.01])).unwrap();
        assert!((x[0] + 0.09).abs() < 1e-12 && (x[1] + 0.06).abs() < 1e-12);
        assert!(matches!(
            unscale_solution(&sp, &DVector::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn oracle_matches_published_solutions() {
        let x = direct_solve_oracle(&fixture()).unwrap();
        assert!((x[0] + 0.09).abs() < 1e-12 && (x[1] + 0.06).abs() < 1e-12);

        let p =
            LinearProblem::from_rows(&[vec![-4.0, -1.5], vec![-2.0, -1.0]], &[0.07, 0.02]).unwrap();
        let x = direct_solve_oracle(&p).unwrap();
        assert!((x[0] + 0.04).abs() < 1e-12 && (x[1] - 0.06).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let p = LinearProblem::from_json(
            r#"{"a": [[2, 1], [1, 2]], "b": [0.1, 0.2], "symmetric": true}"#,
        )
        .unwrap();
        assert!(p.symmetric());
        assert_eq!(LinearProblem::from_json(&p.to_json()).unwrap(), p);
    }

    #[test]
    fn rejects_malformed_problems() {
        assert!(LinearProblem::from_rows(&[vec![1.0, 2.0]], &[0.1]).is_err());
        assert!(LinearProblem::from_rows(&[vec![f64::NAN]], &[0.1]).is_err());
        assert!(LinearProblem::from_rows(&[], &[]).is_err());
        assert!(LinearProblem::from_rows(&[vec![1.0]], &[0.1, 0.2]).is_err());
        let asym =
            LinearProblem::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]], &[0.0, 0.0]).unwrap();
        assert!(asym.with_symmetric(true).is_err());
    }
}
