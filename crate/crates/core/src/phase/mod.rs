//! Phase-domain model of the ring-oscillator integrator.
//!
//! The VCO accumulates phase at `f0 + k_vco (v_in - v0)`. Each of `M` taps,
//! offset by `2 pi k / M`, is compared against the matching tap of a fixed
//! reference by an XOR detector; the detector outputs are averaged through
//! equal resistors. The averaged PWM waveform carries the phase error, which is
//! the time integral of the input.

mod spectrum;

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use spectrum::{dominant_tone, hann_spectrum, sfdr, spectrum_csv, SpectralReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseGenMethod {
    /// Sixteen level shifters, one per phase.
    #[default]
    DirectLevelShift16,
    /// One level shifter feeding a Johnson counter that divides by 16.
    Johnson16,
    /// Four level shifters with divide-by-4 counters.
    Hybrid4x4,
}

/// Sign of the integration, set by biasing the reference a quarter cycle ahead
/// of (inverting) or behind (non-inverting) the VCO.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    #[default]
    Inverting,
    NonInverting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub m_phases: usize,
    /// Hz.
    pub f_ref: f64,
    /// VCO frequency at `v0`, Hz.
    pub f0: f64,
    /// Volts.
    pub v0: f64,
    /// Hz/V before the phase-generation divider.
    pub k_vco: f64,
    pub v_dd: f64,
    pub method: PhaseGenMethod,
    /// Seconds.
    pub dt: f64,
    pub polarity: Polarity,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self {
            m_phases: 32,
            f_ref: 1e9,
            f0: 1e9,
            v0: 0.75,
            k_vco: 300e6,
            v_dd: 1.0,
            method: PhaseGenMethod::DirectLevelShift16,
            dt: 1.0 / (20.0 * 32.0 * 1e9),
            polarity: Polarity::Inverting,
        }
    }
}

impl PhaseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_phases < 1 {
            return Err(Error::InvalidConfig("m_phases must be at least 1".into()));
        }
        for (name, v) in [
            ("f_ref", self.f_ref),
            ("f0", self.f0),
            ("k_vco", self.k_vco),
            ("v_dd", self.v_dd),
            ("dt", self.dt),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !self.v0.is_finite() {
            return Err(Error::InvalidConfig("v0 must be finite".into()));
        }
        let limit = 1.0 / (20.0 * self.f0.max(self.f_ref));
        if self.dt >= limit {
            return Err(Error::InvalidConfig(format!(
                "dt = {:.3e} s gives fewer than 20 samples per period (limit {limit:.3e} s)",
                self.dt
            )));
        }
        Ok(())
    }

    /// XOR detector gain `v_dd / pi` in V/rad.
    pub fn k_pd(&self) -> f64 {
        self.v_dd / PI
    }

    /// `2 pi k_eff k_pd` in 1/s, using the divided VCO gain.
    pub fn loop_gain(&self) -> f64 {
        TAU * effective_kvco(self).0 * self.k_pd()
    }

    /// Whether `dt` resolves the multi-phase PWM carrier at `M f_ref` with 20 samples.
    pub fn alias_risk(&self) -> bool {
        self.dt > 1.0 / (20.0 * self.m_phases as f64 * self.f_ref)
    }

    fn ref_bias(&self) -> f64 {
        match self.polarity {
            Polarity::Inverting => PI / 2.0,
            Polarity::NonInverting => -PI / 2.0,
        }
    }
}

/// One explicit step of the VCO phase, wrapped to `[0, 2 pi)`.
pub fn vco_phase_step(theta: f64, v_in: f64, cfg: &PhaseConfig, dt: f64) -> f64 {
    (theta + TAU * (cfg.f0 + cfg.k_vco * (v_in - cfg.v0)) * dt).rem_euclid(TAU)
}

fn square(theta: f64) -> bool {
    theta.sin() >= 0.0
}

pub fn pd_xor(theta_vco: f64, theta_ref: f64, v_dd: f64) -> f64 {
    if square(theta_vco) != square(theta_ref) {
        v_dd
    } else {
        0.0
    }
}

/// Mean of the detector outputs, one of `M + 1` levels.
pub fn multiphase_sum(levels: &[f64]) -> f64 {
    assert!(
        !levels.is_empty(),
        "multiphase_sum needs at least one level"
    );
    levels.iter().sum::<f64>() / levels.len() as f64
}

/// Effective VCO gain after the phase-generation divider, and the number of
/// level shifters the method needs.
pub fn effective_kvco(cfg: &PhaseConfig) -> (f64, u32) {
    match cfg.method {
        PhaseGenMethod::DirectLevelShift16 => (cfg.k_vco, 16),
        PhaseGenMethod::Johnson16 => (cfg.k_vco / 16.0, 1),
        PhaseGenMethod::Hybrid4x4 => (cfg.k_vco / 4.0, 4),
    }
}

/// Oscillator and reference phase accumulators with `M` tap comparators.
struct PhaseCore {
    cfg: PhaseConfig,
    offsets: Vec<f64>,
    levels: Vec<f64>,
    theta_vco: f64,
    theta_ref: f64,
}

impl PhaseCore {
    fn new(cfg: &PhaseConfig) -> Self {
        let m = cfg.m_phases;
        let mut inner = *cfg;
        inner.k_vco = effective_kvco(cfg).0;
        Self {
            offsets: (0..m).map(|k| TAU * k as f64 / m as f64).collect(),
            levels: vec![0.0; m],
            theta_vco: 0.0,
            theta_ref: cfg.ref_bias().rem_euclid(TAU),
            cfg: inner,
        }
    }

    fn output(&mut self) -> f64 {
        for (level, off) in self.levels.iter_mut().zip(&self.offsets) {
            *level = pd_xor(self.theta_vco + off, self.theta_ref + off, self.cfg.v_dd);
        }
        multiphase_sum(&self.levels)
    }

    fn advance(&mut self, v_in: f64) {
        let dt = self.cfg.dt;
        self.theta_vco = vco_phase_step(self.theta_vco, v_in, &self.cfg, dt);
        self.theta_ref = (self.theta_ref + TAU * self.cfg.f_ref * dt).rem_euclid(TAU);
    }
}

fn warn_alias(cfg: &PhaseConfig) {
    if cfg.alias_risk() {
        log::warn!(
            "alias risk: dt = {:.3e} s is coarser than 1/(20 M f_ref) = {:.3e} s",
            cfg.dt,
            1.0 / (20.0 * cfg.m_phases as f64 * cfg.f_ref)
        );
    }
}

/// Open-loop integrator: `input[n]` drives the VCO during step `n`; the output
/// sample is taken before the step. Starts a quarter cycle from the reference.
pub fn simulate_phase_integrator(input: &[f64], cfg: &PhaseConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    warn_alias(cfg);
    let mut core = PhaseCore::new(cfg);
    Ok(input
        .iter()
        .map(|&v| {
            let out = core.output();
            core.advance(v);
            out
        })
        .collect())
}

/// Single-path closed loop: input `b[n]` through `R_in`, feedback weight `w`
/// from the integrator output, both referred to `v0`.
///
/// Returns the raw multi-phase output; the signal is its deviation from
/// `v_dd / 2`, which settles to `-b / w` for DC input.
pub fn simulate_phase_lowpass(input: &[f64], weight: f64, cfg: &PhaseConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if !(weight > 0.0 && weight.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "weight must be positive, got {weight}"
        )));
    }
    warn_alias(cfg);
    let mut core = PhaseCore::new(cfg);
    let mid = 0.5 * cfg.v_dd;
    Ok(input
        .iter()
        .map(|&b| {
            let out = core.output();
            core.advance(cfg.v0 + (b + weight * (out - mid)) / (1.0 + weight));
            out
        })
        .collect())
}

/// Cascade of `order` identical one-pole low-pass sections at `fc` Hz.
pub fn lowpass_filter(x: &[f64], fc: f64, dt: f64, order: usize) -> Vec<f64> {
    let a = 1.0 - (-TAU * fc * dt).exp();
    let mut y = x.to_vec();
    for _ in 0..order {
        let Some(&first) = y.first() else { break };
        let mut s = first;
        for v in y.iter_mut() {
            s += a * (*v - s);
            *v = s;
        }
    }
    y
}

/// Average VCO frequency over `duration` seconds at each input voltage.
pub fn kvco_curve(cfg: &PhaseConfig, voltages: &[f64], duration: f64) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    let steps = (duration / cfg.dt).round().max(1.0) as usize;
    Ok(voltages
        .iter()
        .map(|&v| {
            let mut theta = 0.0;
            let mut turns = 0u64;
            for _ in 0..steps {
                let next = vco_phase_step(theta, v, cfg, cfg.dt);
                if next < theta {
                    turns += 1;
                }
                theta = next;
            }
            let total = turns as f64 * TAU + theta;
            (v, total / (TAU * steps as f64 * cfg.dt))
        })
        .collect())
}

/// Least-squares `(slope, intercept)`.
pub fn fit_line(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
