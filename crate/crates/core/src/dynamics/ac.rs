//! Small-signal response of a single-path row: input through `R_in`, one
//! feedback resistor `R_f` from the row's own output.
//!
//! `H(jw) = -(R_f/R_in) / (1 + jw (1 + R_f/R_in) / g)`, so the 3-dB bandwidth is
//! `g / (1 + R_f/R_in)` in rad/s.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;

use super::sim::{auto_dt, Rk4};
use super::system::{build_system, stability_report, StateSpace};
use super::SolverConfig;
use crate::error::{Error, Result};
use crate::linalg::Lu;
use crate::netlist::{CircuitPlan, PathSign};

/// `R_f / R_in` of the row's only feedback path.
pub fn single_path_ratio(plan: &CircuitPlan, row: usize) -> Result<f64> {
    if row >= plan.n {
        return Err(Error::InvalidConfig(format!(
            "row {row} out of range for n = {}",
            plan.n
        )));
    }
    let connected: Vec<_> = plan
        .row_paths(row)
        .iter()
        .filter(|p| p.is_connected())
        .collect();
    match connected.as_slice() {
        [p] if p.col == row && p.sign == PathSign::Direct => Ok(1.0 / p.realized_weight),
        [p] => Err(Error::UnsupportedAcPath {
            row,
            reason: format!(
                "path ({}, {}) is {:?}, not a direct self-loop",
                p.row, p.col, p.sign
            ),
        }),
        [] => Err(Error::UnsupportedAcPath {
            row,
            reason: "row has no feedback path".into(),
        }),
        many => Err(Error::MultiPathRow {
            row,
            paths: many.len(),
        }),
    }
}

pub fn ac_response(
    plan: &CircuitPlan,
    row: usize,
    cfg: &SolverConfig,
    freq_hz: f64,
) -> Result<Complex64> {
    let ratio = single_path_ratio(plan, row)?;
    let w = 2.0 * PI * freq_hz;
    Ok(Complex64::from(-ratio) / Complex64::new(1.0, w * (1.0 + ratio) / cfg.loop_gain()))
}

/// 3-dB bandwidth in rad/s for a given `R_f / R_in`.
pub fn bandwidth_for_ratio(g: f64, ratio: f64) -> f64 {
    g / (1.0 + ratio)
}

/// 3-dB bandwidth of a single-path row in rad/s; divide by `2 pi` for Hz.
pub fn bandwidth(plan: &CircuitPlan, row: usize, cfg: &SolverConfig) -> Result<f64> {
    Ok(bandwidth_for_ratio(
        cfg.loop_gain(),
        single_path_ratio(plan, row)?,
    ))
}

/// Drives input `row` of `ss` with a unit sinusoid and returns the steady-state
/// amplitude of main state `row`, measured by lock-in over whole periods.
fn sinusoid_gain(ss: &StateSpace, row: usize, freq_hz: f64, settle_s: f64) -> f64 {
    const PERIODS: usize = 4;
    let period = 1.0 / freq_hz;
    let per_period = ((period / auto_dt(&ss.m)).ceil() as usize).max(256);
    let dt = period / per_period as f64;
    let settle_steps = (settle_s / period).ceil() as usize * per_period;

    let u = ss.input.column(row).into_owned();
    let w = 2.0 * PI * freq_hz;
    let mut f0 = DVector::zeros(ss.dim());
    let mut fh = f0.clone();
    let mut f1 = f0.clone();
    let mut z = DVector::zeros(ss.dim());
    let mut rk = Rk4::new(ss.dim());
    let (mut i_acc, mut q_acc) = (0.0, 0.0);
    let total = settle_steps + PERIODS * per_period;
    for k in 0..total {
        let t = k as f64 * dt;
        f0.copy_from(&u);
        f0 *= (w * t).sin();
        fh.copy_from(&u);
        fh *= (w * (t + 0.5 * dt)).sin();
        f1.copy_from(&u);
        f1 *= (w * (t + dt)).sin();
        rk.step(&ss.m, &mut z, dt, &f0, &fh, &f1);
        if k + 1 > settle_steps {
            let t1 = t + dt;
            i_acc += z[row] * (w * t1).sin();
            q_acc += z[row] * (w * t1).cos();
        }
    }
    let n = (PERIODS * per_period) as f64;
    2.0 * (i_acc * i_acc + q_acc * q_acc).sqrt() / n
}

fn settle_time(ss: &StateSpace) -> Result<f64> {
    let report = stability_report(ss)?;
    if !report.stable {
        return Err(Error::UnstableSystem {
            max_re_eig: report.max_re_eig,
            negated_max_re_eig: f64::NAN,
        });
    }
    Ok(30.0 / -report.max_re_eig)
}

/// Time-domain gain magnitude of the structural model at `freq_hz`.
pub fn probe_gain(plan: &CircuitPlan, row: usize, cfg: &SolverConfig, freq_hz: f64) -> Result<f64> {
    single_path_ratio(plan, row)?;
    if !(freq_hz > 0.0 && freq_hz.is_finite()) {
        return Err(Error::InvalidConfig(
            "probe frequency must be positive".into(),
        ));
    }
    let ss = build_system(plan, cfg);
    Ok(sinusoid_gain(&ss, row, freq_hz, settle_time(&ss)?))
}

/// 3-dB point of the structural model found by bisection on probed gains, in rad/s.
pub fn probe_bandwidth(plan: &CircuitPlan, row: usize, cfg: &SolverConfig) -> Result<f64> {
    let guess_hz = bandwidth(plan, row, cfg)? / (2.0 * PI);
    let ss = build_system(plan, cfg);
    let settle = settle_time(&ss)?;
    let dc = (Lu::factor(&ss.m)?.solve(&ss.input.column(row).into_owned()))[row].abs();
    let target = dc / 2f64.sqrt();

    let (mut lo, mut hi) = ((guess_hz / 100.0).ln(), (guess_hz * 100.0).ln());
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if sinusoid_gain(&ss, row, mid.exp(), settle) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-6 {
            break;
        }
    }
    Ok(2.0 * PI * (0.5 * (lo + hi)).exp())
}
