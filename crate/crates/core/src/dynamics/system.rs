use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::SolverConfig;
use crate::error::{Error, Result};
use crate::netlist::{realized_matrix, CircuitPlan, PathSign};

/// Largest state dimension [`stability_report`] accepts.
pub const MAX_EIG_DIM: usize = 256;

/// Linear ODE `dz/dt = m z + f` with main outputs first, then inverter outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub m: DMatrix<f64>,
    pub f: DVector<f64>,
    /// `df/db_hat`, so a different input vector can be applied without a rebuild.
    pub input: DMatrix<f64>,
    pub gamma: Vec<f64>,
    pub state_labels: Vec<String>,
    pub n_main: usize,
    /// System the residual is measured against, in the caller's orientation.
    pub realized_a: DMatrix<f64>,
    pub realized_b: DVector<f64>,
}

impl StateSpace {
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// Same dynamics driven by another input vector.
    pub fn with_input(&self, b: &DVector<f64>) -> Self {
        Self {
            f: &self.input * b,
            realized_b: b.clone(),
            ..self.clone()
        }
    }

    /// Equilibrium `z* = -m^-1 f`, restricted to the main states.
    pub fn equilibrium(&self) -> Result<DVector<f64>> {
        let lu = crate::linalg::Lu::factor(&self.m)?;
        Ok(-lu.solve(&self.f).rows(0, self.n_main).into_owned())
    }
}

fn main_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("x{i}")).collect()
}

/// Structural model of a plan.
///
/// Main node `i`: `dx_i/dt = -g (b'_i + sum_direct w_ij x_j + sum_inv w_ij y_k) / gamma_i`.
/// Inverter `k` fed from `x_j`: `dy_k/dt = -g (x_j + y_k) / 2`.
pub fn build_system(plan: &CircuitPlan, cfg: &SolverConfig) -> StateSpace {
    let g = cfg.loop_gain();
    let n = plan.n;
    let dim = n + plan.inverter_count;
    let sign = if plan.negated { -1.0 } else { 1.0 };
    let gamma: Vec<f64> = (0..n).map(|i| plan.gamma(i)).collect();

    let mut m = DMatrix::zeros(dim, dim);
    let mut input = DMatrix::zeros(dim, n);
    let mut labels = main_labels(n);
    let mut k = n;
    for i in 0..n {
        let c = -g / gamma[i];
        input[(i, i)] = c * sign;
        for p in plan.row_paths(i) {
            match p.sign {
                PathSign::Direct => m[(i, p.col)] += c * p.realized_weight,
                PathSign::ViaInverter => {
                    m[(i, k)] += c * p.realized_weight;
                    m[(k, k)] = -g / 2.0;
                    m[(k, p.col)] = -g / 2.0;
                    labels.push(format!("inv{}_{}", p.row, p.col));
                    k += 1;
                }
                PathSign::Disconnected => {}
            }
        }
    }
    debug_assert_eq!(k, dim);
    let (realized_a, realized_b) = realized_matrix(plan);
    StateSpace {
        f: &input * &realized_b,
        m,
        input,
        gamma,
        state_labels: labels,
        n_main: n,
        realized_a,
        realized_b,
    }
}

/// `dx/dt = -g diag(1/gamma) (b - A x)` with `gamma_i = 1 + sum_j |a_ij|`.
pub fn build_ideal_system(a: &DMatrix<f64>, b: &DVector<f64>, cfg: &SolverConfig) -> StateSpace {
    let g = cfg.loop_gain();
    let n = a.nrows();
    let gamma: Vec<f64> = a
        .row_iter()
        .map(|r| 1.0 + r.iter().map(|v| v.abs()).sum::<f64>())
        .collect();
    let d = DVector::from_iterator(n, gamma.iter().map(|gm| g / gm));
    let m = DMatrix::from_fn(n, n, |i, j| d[i] * a[(i, j)]);
    let input = DMatrix::from_diagonal(&(-&d));
    StateSpace {
        f: &input * b,
        m,
        input,
        gamma,
        state_labels: main_labels(n),
        n_main: n,
        realized_a: a.clone(),
        realized_b: b.clone(),
    }
}

/// Ideal loop on the negated normal equations `-(A^T A) x = -A^T b`.
///
/// `-A^T A` is negative definite for nonsingular `A`, so the loop is stable.
pub fn build_gram_system(a: &DMatrix<f64>, b: &DVector<f64>, cfg: &SolverConfig) -> StateSpace {
    let gram = -(a.transpose() * a);
    let rhs = -(a.transpose() * b);
    let mut ss = build_ideal_system(&gram, &rhs, cfg);
    ss.input = &ss.input * -a.transpose();
    ss.realized_a = a.clone();
    ss.realized_b = b.clone();
    ss
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    /// 1/s.
    pub max_re_eig: f64,
    pub stable: bool,
    pub eig_method: &'static str,
    pub dimension: usize,
}

pub fn stability_report(ss: &StateSpace) -> Result<StabilityReport> {
    let dim = ss.dim();
    if dim > MAX_EIG_DIM {
        return Err(Error::InvalidConfig(format!(
            "state dimension {dim} exceeds {MAX_EIG_DIM}"
        )));
    }
    let schur = [f64::EPSILON, 1e-14, 1e-12, 1e-10]
        .iter()
        .find_map(|&eps| ss.m.clone().try_schur(eps, 100 * dim.max(10)))
        .ok_or(Error::EigenFailure { dim })?;
    let max_re_eig = schur
        .complex_eigenvalues()
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(StabilityReport {
        max_re_eig,
        stable: max_re_eig < 0.0,
        eig_method: "real Schur (Francis double shift)",
        dimension: dim,
    })
}
