use std::f64::consts::TAU;
use std::fmt::Write as _;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use super::PhaseConfig;
use crate::error::{Error, Result};

/// Half-width in bins of the Hann main lobe.
const LOBE: usize = 2;

/// Tones must clear the median bin by this factor (10 dB) to count as present.
const FLOOR_MARGIN: f64 = 3.162_277_660_168_379_5;

/// Spur amplitudes are floored here relative to the fundamental, capping SFDR at 300 dB.
const SPUR_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    pub sfdr_db: f64,
    pub fundamental_hz: f64,
    pub worst_spur_hz: f64,
    /// `(freq_hz, mag_db)` one-sided, amplitude-normalized so a full-scale sine
    /// of amplitude 1 reads 0 dB.
    #[serde(skip)]
    pub spectrum: Vec<(f64, f64)>,
}

/// One-sided Hann-windowed amplitude spectrum of the mean-removed series.
pub fn hann_spectrum(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (TAU * i as f64 / n as f64).cos())
        .collect();
    let gain: f64 = window.iter().sum();
    let mut buf: Vec<Complex64> = x
        .iter()
        .zip(&window)
        .map(|(v, w)| Complex64::new((v - mean) * w, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..=n / 2]
        .iter()
        .map(|c| 2.0 * c.norm() / gain)
        .collect()
}

fn lobe_rss(mag: &[f64], center: usize, skip: Option<&[bool]>) -> f64 {
    let lo = center.saturating_sub(LOBE);
    let hi = (center + LOBE).min(mag.len() - 1);
    (lo..=hi)
        .filter(|&k| skip.is_none_or(|s| !s[k]))
        .map(|k| mag[k] * mag[k])
        .sum::<f64>()
        .sqrt()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

fn check_length(n: usize) -> Result<()> {
    if n < 1 << 12 || !n.is_power_of_two() {
        return Err(Error::InvalidConfig(format!(
            "series length must be a power of two >= 4096, got {n}"
        )));
    }
    Ok(())
}

/// Spurious-free dynamic range of `output` sampled at `cfg.dt`.
///
/// Tone amplitudes are the root-sum-square over the Hann main lobe. DC and all
/// harmonics of the fundamental are excluded from the spur search. Off-bin
/// tones leak beyond the lobe, so `f_signal` should sit on a bin.
pub fn sfdr(output: &[f64], f_signal: f64, cfg: &PhaseConfig) -> Result<SpectralReport> {
    check_length(output.len())?;
    let n = output.len();
    let df = 1.0 / (n as f64 * cfg.dt);
    let k_sig = (f_signal / df).round() as usize;
    if f_signal.is_nan() || f_signal <= 0.0 || k_sig < 4 || k_sig + LOBE > n / 2 {
        return Err(Error::InvalidConfig(format!(
            "signal at {f_signal:.4e} Hz is not resolvable with {n} samples at dt = {:.3e} s",
            cfg.dt
        )));
    }
    let mag = hann_spectrum(output);
    let k1 = (k_sig - LOBE..=k_sig + LOBE)
        .max_by(|&a, &b| mag[a].total_cmp(&mag[b]))
        .expect("non-empty lobe");
    let floor = median(&mag);
    if mag[k1] <= FLOOR_MARGIN * floor {
        return Err(Error::NoFundamental { f_signal });
    }
    let fund = lobe_rss(&mag, k1, None);

    let mut masked = vec![false; mag.len()];
    for m in masked.iter_mut().take(LOBE + 1) {
        *m = true;
    }
    let mut h = k1;
    while h - LOBE < mag.len() {
        for m in masked
            .iter_mut()
            .take((h + LOBE + 1).min(mag.len()))
            .skip(h - LOBE)
        {
            *m = true;
        }
        h += k1;
    }
    let spur_bin = (0..mag.len())
        .filter(|&k| !masked[k])
        .max_by(|&a, &b| mag[a].total_cmp(&mag[b]));
    let (spur_hz, spur) = match spur_bin {
        Some(k) => (k as f64 * df, lobe_rss(&mag, k, Some(&masked))),
        None => (0.0, 0.0),
    };
    let spur = spur.max(fund * SPUR_FLOOR);

    Ok(SpectralReport {
        sfdr_db: 20.0 * (fund / spur).log10(),
        fundamental_hz: k1 as f64 * df,
        worst_spur_hz: spur_hz,
        spectrum: mag
            .iter()
            .enumerate()
            .map(|(k, m)| (k as f64 * df, 20.0 * m.max(1e-300).log10()))
            .collect(),
    })
}

/// Frequency and amplitude (dB) of the strongest bin within `[f_lo, f_hi]`.
pub fn dominant_tone(x: &[f64], dt: f64, f_lo: f64, f_hi: f64) -> Result<(f64, f64)> {
    check_length(x.len())?;
    let df = 1.0 / (x.len() as f64 * dt);
    let mag = hann_spectrum(x);
    let lo = (f_lo / df).ceil().max(1.0) as usize;
    let hi = ((f_hi / df).floor() as usize).min(mag.len() - 1);
    let k = (lo..=hi)
        .max_by(|&a, &b| mag[a].total_cmp(&mag[b]))
        .ok_or_else(|| Error::InvalidConfig(format!("empty band [{f_lo}, {f_hi}] Hz")))?;
    Ok((k as f64 * df, 20.0 * lobe_rss(&mag, k, None).log10()))
}

/// `freq_hz,mag_db` rows.
pub fn spectrum_csv(report: &SpectralReport) -> String {
    let mut out = String::from("freq_hz,mag_db\n");
    for (f, db) in &report.spectrum {
        let _ = writeln!(out, "{f:.8e},{db:.8e}");
    }
    out
}
