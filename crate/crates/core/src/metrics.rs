//! Operation count, power, energy and efficiency figures.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::netlist::CircuitPlan;

pub const DEFAULT_INTEGRATOR_MW: f64 = 0.15;

/// LU-equivalent operation count `2 n^3 / 3`, rounded half-up.
pub fn ops_count(n: usize) -> u64 {
    let n = n as u64;
    (4 * n * n * n + 3) / 6
}

pub fn power_for_integrators(count: usize, per_integrator_mw: f64) -> Result<f64> {
    if !(per_integrator_mw > 0.0 && per_integrator_mw.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "per-integrator power must be positive, got {per_integrator_mw}"
        )));
    }
    Ok(count as f64 * per_integrator_mw)
}

/// `total_integrators * per_integrator_mw` in mW.
pub fn power_estimate(plan: &CircuitPlan, per_integrator_mw: f64) -> Result<f64> {
    power_for_integrators(plan.total_integrators, per_integrator_mw)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub n_ops: u64,
    pub power_mw: f64,
    pub t_converge_us: f64,
    pub energy_uj: f64,
    pub mops_per_s: f64,
    pub gops_per_w: f64,
    pub integrator_count: Option<usize>,
    /// Relative level-shifter cost of the phase-generation method.
    pub level_shifters: Option<u32>,
}

/// `eta = N / (P T)` and the derived throughput and energy.
pub fn efficiency(n_ops: u64, power_mw: f64, t_s: f64) -> Result<EnergyReport> {
    if !(power_mw > 0.0 && power_mw.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "power must be positive, got {power_mw}"
        )));
    }
    if !(t_s > 0.0 && t_s.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "time must be positive, got {t_s}"
        )));
    }
    let t_us = t_s * 1e6;
    let ops = n_ops as f64;
    Ok(EnergyReport {
        n_ops,
        power_mw,
        t_converge_us: t_us,
        energy_uj: power_mw * t_us * 1e-3,
        mops_per_s: ops / t_s / 1e6,
        gops_per_w: ops / (power_mw * 1e-3 * t_s) / 1e9,
        integrator_count: None,
        level_shifters: None,
    })
}

/// Formats `x` with `digits` significant figures, dropping trailing zeros.
pub fn sig_figs(x: f64, digits: u32) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = digits as i32 - 1 - mag;
    let scale = 10f64.powi(decimals);
    let rounded = (x * scale).round() / scale;
    // Rounding can carry into the next decade (9.96 -> 10.0).
    let mag = rounded.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - mag).max(0) as usize;
    let s = format!("{rounded:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub const TABLE_HEADER: &str = "method,matrix_size,time_us,mops_s,gops_w,power_mw,energy_uj";

impl EnergyReport {
    /// One comparison-table row; efficiency to 2 significant figures, the rest to 3.
    pub fn table_row(&self, method: &str, n: usize) -> String {
        format!(
            "{method},{n}x{n},{},{},{},{},{}",
            sig_figs(self.t_converge_us, 3),
            sig_figs(self.mops_per_s, 3),
            sig_figs(self.gops_per_w, 2),
            sig_figs(self.power_mw, 3),
            sig_figs(self.energy_uj, 3),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{plan, PlanOptions};
    use crate::problem::LinearProblem;

    #[test]
    fn ops_count_values() {
        assert_eq!(ops_count(8), 341);
        assert_eq!(ops_count(1), 1);
        assert_eq!(ops_count(16), 2731);
        for n in 1..200usize {
            let exact = 2.0 * (n as f64).powi(3) / 3.0;
            assert_eq!(ops_count(n), (exact + 0.5).floor() as u64, "n = {n}");
        }
    }

    #[test]
    fn power_examples() {
        assert!((power_for_integrators(40, 0.15).unwrap() - 6.0).abs() < 1e-12);
        assert!((power_for_integrators(40, 0.2).unwrap() - 8.0).abs() < 1e-12);
        assert!(power_for_integrators(40, 0.0).is_err());
        let p =
            LinearProblem::from_rows(&[vec![-4.0, -1.5], vec![-2.0, -1.0]], &[0.45, 0.24]).unwrap();
        let pl = plan(&p, 2000.0, &PlanOptions::default()).unwrap();
        assert!((power_estimate(&pl, 0.15).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn table_three_row() {
        let r = efficiency(341, 6.0, 10e-6).unwrap();
        assert_eq!(sig_figs(r.gops_per_w, 2), "5.7");
        assert_eq!(sig_figs(r.mops_per_s, 3), "34.1");
        assert_eq!(sig_figs(r.energy_uj, 2), "0.06");
        assert_eq!(
            r.table_row("This work", 8),
            "This work,8x8,10,34.1,5.7,6,0.06"
        );
    }

    #[test]
    fn fast_convergence_efficiency() {
        let r = efficiency(341, 6.0, 0.4e-6).unwrap();
        assert_eq!(sig_figs(r.gops_per_w, 3), "142");
    }

    #[test]
    fn doubling_power_halves_efficiency() {
        let a = efficiency(341, 6.0, 10e-6).unwrap();
        let b = efficiency(341, 12.0, 10e-6).unwrap();
        assert_eq!(a.gops_per_w, 2.0 * b.gops_per_w);
    }

    #[test]
    fn rejects_non_positive_inputs() {
        assert!(efficiency(341, 0.0, 1e-6).is_err());
        assert!(efficiency(341, 6.0, 0.0).is_err());
        assert!(efficiency(341, f64::NAN, 1e-6).is_err());
    }

    #[test]
    fn sig_fig_formatting() {
        assert_eq!(sig_figs(9.96, 2), "10");
        assert_eq!(sig_figs(0.0123, 2), "0.012");
        assert_eq!(sig_figs(12345.0, 2), "12000");
        assert_eq!(sig_figs(-5.683, 2), "-5.7");
    }
}
