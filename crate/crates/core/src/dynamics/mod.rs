//! Continuous-time dynamics realized by a compiled plan.
//!
//! Each main integrator is inverting: its output slews at `-g * v_node` where
//! `v_node` is the passive weighted average of the input and feedback voltages
//! at its summing node. The loop gain is `g = 2 pi k_vco k_pd` in 1/s with
//! `k_vco` in Hz/V and `k_pd` in V/rad.

mod ac;
mod sim;
mod system;

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netlist::{plan, realized_matrix, CircuitPlan, Orientation, PlanOptions};
use crate::problem::{inv_inf_norm, scale_problem, LinearProblem, ScalePolicy, ScaledProblem};

pub use ac::{
    ac_response, bandwidth, bandwidth_for_ratio, probe_bandwidth, probe_gain, single_path_ratio,
};
pub use sim::{simulate, Trace, TraceSample, CONVERGENCE_WINDOW, OVERFLOW_LIMIT};
pub use system::{
    build_gram_system, build_ideal_system, build_system, stability_report, StabilityReport,
    StateSpace, MAX_EIG_DIM,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `dx/dt = -g diag(1/gamma) (b - A x)` straight from the matrix.
    Ideal,
    /// Main integrators plus inverter stages assembled from the plan.
    #[default]
    Structural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveRoute {
    Planned,
    Negated,
    /// Negated normal equations `-(A^T A) x = -A^T b`.
    GramFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Hz/V.
    pub k_vco: f64,
    /// V/rad.
    pub k_pd: f64,
    /// Volts.
    pub eps_residual: f64,
    /// Seconds.
    pub t_max: f64,
    /// Seconds; 0 selects `0.1 / ||M||_inf`.
    pub dt: f64,
    pub mode: Mode,
    pub gram_fallback: bool,
    /// End the run once the convergence window is satisfied.
    pub stop_on_converge: bool,
    /// Record every k-th step; 0 disables the trace.
    pub trace_decimation: usize,
    pub scale: Option<ScalePolicy>,
}

pub const DEFAULT_K_VCO: f64 = 300e6;
pub const DEFAULT_V_DD: f64 = 1.0;

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            k_vco: DEFAULT_K_VCO,
            k_pd: DEFAULT_V_DD / PI,
            eps_residual: 1e-3,
            t_max: 10e-6,
            dt: 0.0,
            mode: Mode::Structural,
            gram_fallback: true,
            stop_on_converge: false,
            trace_decimation: 0,
            scale: None,
        }
    }
}

impl SolverConfig {
    /// `g = 2 pi k_vco k_pd` in 1/s.
    pub fn loop_gain(&self) -> f64 {
        2.0 * PI * self.k_vco * self.k_pd
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("k_vco", self.k_vco)?;
        positive("k_pd", self.k_pd)?;
        positive("eps_residual", self.eps_residual)?;
        positive("t_max", self.t_max)?;
        if !(self.dt >= 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "dt must be non-negative, got {}",
                self.dt
            )));
        }
        if self.dt > self.t_max {
            return Err(Error::InvalidConfig("dt exceeds t_max".into()));
        }
        Ok(())
    }
}

/// Stability verdict for one rung of the orientation ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Attempt {
    pub route: SolveRoute,
    pub max_re_eig: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    /// Solution in the caller's orientation and scale.
    #[serde(serialize_with = "ser_vector")]
    pub x: DVector<f64>,
    /// `||b_hat - A_hat x||_inf` of the simulated system at the end of the run.
    pub residual_inf: f64,
    pub converged: bool,
    pub t_converge: Option<f64>,
    pub stability: StabilityReport,
    pub route: SolveRoute,
    pub attempts: Vec<Attempt>,
    /// A state exceeded [`OVERFLOW_LIMIT`] and the run was cut short.
    pub diverged: bool,
    pub peak_state: f64,
    pub steps: usize,
    pub dt: f64,
    pub t_end: f64,
    #[serde(skip)]
    pub trace: Option<Trace>,
    #[serde(skip)]
    pub plan: Option<CircuitPlan>,
    #[serde(skip)]
    pub scaling: Option<ScaledProblem>,
}

fn ser_vector<S: serde::Serializer>(
    v: &DVector<f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

/// Full pipeline: optional scaling, compilation, stability ladder, simulation
/// and unscaling.
///
/// The ladder tries the planned orientation, then its negation, then (if
/// enabled) the Gram system. The residual is always measured against the
/// realized system of the planned orientation.
pub fn solve(p: &LinearProblem, cfg: &SolverConfig, opts: &PlanOptions) -> Result<SolveResult> {
    cfg.validate()?;
    let (work, scaling) = match cfg.scale {
        Some(policy) => {
            let sp = scale_problem(p, policy)?;
            (sp.scaled_problem(), Some(sp))
        }
        None => {
            p.check_input_range()?;
            (p.clone(), None)
        }
    };
    inv_inf_norm(work.a())?;

    let mut attempts = Vec::with_capacity(3);
    let mut rungs: Vec<(SolveRoute, StateSpace, Option<CircuitPlan>)> = Vec::with_capacity(2);
    let (realized_a, realized_b, planned) = match cfg.mode {
        Mode::Structural => {
            let planned = plan(&work, opts.r_in, opts)?;
            let flipped = PlanOptions {
                orientation: if planned.negated {
                    Orientation::Keep
                } else {
                    Orientation::Negate
                },
                ..*opts
            };
            let negated = plan(&work, opts.r_in, &flipped)?;
            rungs.push((
                SolveRoute::Planned,
                build_system(&planned, cfg),
                Some(planned.clone()),
            ));
            rungs.push((
                SolveRoute::Negated,
                build_system(&negated, cfg),
                Some(negated),
            ));
            let (a, b) = realized_matrix(&planned);
            (a, b, Some(planned))
        }
        Mode::Ideal => {
            let (a, b) = (work.a().clone(), work.b().clone());
            let mut neg = build_ideal_system(&(-&a), &(-&b), cfg);
            neg.realized_a = a.clone();
            neg.realized_b = b.clone();
            rungs.push((SolveRoute::Planned, build_ideal_system(&a, &b, cfg), None));
            rungs.push((SolveRoute::Negated, neg, None));
            (a, b, None)
        }
    };

    let mut chosen = None;
    for (route, ss, rung_plan) in rungs {
        let report = stability_report(&ss)?;
        attempts.push(Attempt {
            route,
            max_re_eig: report.max_re_eig,
            stable: report.stable,
        });
        log::debug!("{route:?}: max Re(eig) = {:.4e}", report.max_re_eig);
        if report.stable {
            chosen = Some((route, ss, rung_plan));
            break;
        }
    }
    let (route, ss, used_plan) = match chosen {
        Some(c) => c,
        None if cfg.gram_fallback => {
            log::info!("both orientations unstable; solving the normal equations");
            let ss = build_gram_system(&realized_a, &realized_b, cfg);
            let report = stability_report(&ss)?;
            attempts.push(Attempt {
                route: SolveRoute::GramFallback,
                max_re_eig: report.max_re_eig,
                stable: report.stable,
            });
            (SolveRoute::GramFallback, ss, planned)
        }
        None => {
            return Err(Error::UnstableSystem {
                max_re_eig: attempts[0].max_re_eig,
                negated_max_re_eig: attempts[1].max_re_eig,
            })
        }
    };

    let mut result = simulate(&ss, cfg)?;
    result.route = route;
    result.attempts = attempts;
    result.plan = used_plan;
    if let Some(sp) = &scaling {
        let k = sp.factor_scale;
        result.x *= k;
        if let Some(trace) = result.trace.as_mut() {
            for s in &mut trace.samples {
                s.x.iter_mut().for_each(|v| *v *= k);
            }
        }
    }
    result.scaling = scaling;
    Ok(result)
}
