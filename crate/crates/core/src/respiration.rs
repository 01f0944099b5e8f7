//! Respiration rate by short-time spectral peak picking, and breath-volume
//! features from a calibrated respiration-band signal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{dft_magnitude, hamming_window, SampledSignal, SignalKind};
use crate::stats::{median, rms};
use crate::time::TimestampMs;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftParams {
    pub window_s: f64,
    pub hop_s: f64,
    /// Upper edge of the breathing band searched for the peak.
    pub f_max_hz: f64,
}

impl Default for StftParams {
    fn default() -> Self {
        Self {
            window_s: 60.0,
            hop_s: 60.0,
            f_max_hz: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominantFrequency {
    pub window_start: TimestampMs,
    pub frequency_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RespirationFeatures {
    /// Breaths per minute, one value per analysis window.
    pub rate_bpm: Vec<f64>,
    pub tidal_volume: f64,
    pub vital_capacity: f64,
    /// Not measurable from a chest band; carried from configuration.
    pub residual_volume: f64,
}

pub fn stft_dominant_frequency(signal: &SampledSignal) -> Result<Vec<DominantFrequency>> {
    stft_dominant_frequency_with(signal, &StftParams::default())
}

/// Per window: remove the mean, apply a Hamming window, take the magnitude
/// spectrum and report the strongest bin in `(0, f_max]`. Ties go to the
/// lower frequency.
pub fn stft_dominant_frequency_with(
    signal: &SampledSignal,
    params: &StftParams,
) -> Result<Vec<DominantFrequency>> {
    signal.require_kind(SignalKind::Respiration)?;
    let rate = signal.rate_hz();
    if !(params.window_s > 0.0 && params.hop_s > 0.0 && params.f_max_hz > 0.0) {
        return Err(Error::invalid("window, hop and f_max must be > 0"));
    }
    let width = (params.window_s * rate).round() as usize;
    let hop = ((params.hop_s * rate).round() as usize).max(1);
    if width < 2 || signal.len() < width {
        return Err(Error::no_data(format!(
            "respiration rate needs {} s of signal, have {:.1} s",
            params.window_s,
            signal.duration_seconds()
        )));
    }
    let window = hamming_window(width)?;
    let mut out = Vec::new();
    let mut start = 0;
    while start + width <= signal.len() {
        let chunk = &signal.samples()[start..start + width];
        let m = chunk.iter().sum::<f64>() / width as f64;
        let tapered: Vec<f64> = chunk
            .iter()
            .zip(&window)
            .map(|(x, w)| (x - m) * w)
            .collect();
        let origin = signal.start_time() + (start as f64 * 1000.0 / rate).round() as TimestampMs;
        let spectrum = dft_magnitude(&tapered, rate, origin)?;
        let last = spectrum.magnitudes.len() - 1;
        let k_max = ((params.f_max_hz / spectrum.bin_width_hz + 1e-9).floor() as usize).min(last);
        if k_max < 1 {
            return Err(Error::invalid("f_max is below the first frequency bin"));
        }
        let best = (1..=k_max).fold(1, |b, k| {
            if spectrum.magnitudes[k] > spectrum.magnitudes[b] {
                k
            } else {
                b
            }
        });
        out.push(DominantFrequency {
            window_start: origin,
            frequency_hz: spectrum.frequency(best),
        });
        start += hop;
    }
    Ok(out)
}

pub fn respiration_rate(signal: &SampledSignal) -> Result<Vec<f64>> {
    respiration_rate_with(signal, &StftParams::default())
}

pub fn respiration_rate_with(signal: &SampledSignal, params: &StftParams) -> Result<Vec<f64>> {
    Ok(stft_dominant_frequency_with(signal, params)?
        .iter()
        .map(|d| d.frequency_hz * 60.0)
        .collect())
}

/// Peak-to-trough excursion of every complete breath. Breaths run between
/// upward zero crossings of the mean-removed signal; the crossing detector
/// has hysteresis of 10% of the signal RMS so noise near zero does not split
/// a breath.
pub fn breath_excursions(samples: &[f64]) -> Vec<f64> {
    if samples.is_empty() {
        return Vec::new();
    }
    let m = samples.iter().sum::<f64>() / samples.len() as f64;
    let x: Vec<f64> = samples.iter().map(|v| v - m).collect();
    let band = 0.1 * rms(&x);
    let mut upward = Vec::new();
    let mut below = false;
    for (i, &v) in x.iter().enumerate() {
        if v < -band {
            below = true;
        } else if v > band && below {
            below = false;
            // The crossing itself is the last sample at or below zero.
            let mut k = i;
            while k > 0 && x[k - 1] > 0.0 {
                k -= 1;
            }
            upward.push(k);
        }
    }
    upward
        .windows(2)
        .map(|w| {
            let cycle = &x[w[0]..w[1]];
            let hi = cycle.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lo = cycle.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            hi - lo
        })
        .collect()
}

/// Tidal volume (median breath), vital capacity (largest breath) and the
/// configured residual volume, all in litres. Rates are included when the
/// signal covers at least one analysis window.
pub fn volume_features(
    signal: &SampledSignal,
    calibration_units_per_litre: f64,
    vr_litres: f64,
) -> Result<RespirationFeatures> {
    volume_features_with(
        signal,
        calibration_units_per_litre,
        vr_litres,
        &StftParams::default(),
    )
}

pub fn volume_features_with(
    signal: &SampledSignal,
    calibration_units_per_litre: f64,
    vr_litres: f64,
    params: &StftParams,
) -> Result<RespirationFeatures> {
    signal.require_kind(SignalKind::Respiration)?;
    if !(calibration_units_per_litre.is_finite() && calibration_units_per_litre > 0.0) {
        return Err(Error::invalid(format!(
            "calibration must be > 0 units per litre, got {calibration_units_per_litre}"
        )));
    }
    if !(vr_litres.is_finite() && vr_litres >= 0.0) {
        return Err(Error::invalid(format!(
            "residual volume must be >= 0 l, got {vr_litres}"
        )));
    }
    let excursions = breath_excursions(signal.samples());
    if excursions.len() < 3 {
        return Err(Error::no_data(format!(
            "need at least 3 breath cycles, found {}",
            excursions.len()
        )));
    }
    let rate_bpm = match respiration_rate_with(signal, params) {
        Ok(r) => r,
        Err(e) if e.is_no_data() => Vec::new(),
        Err(e) => return Err(e),
    };
    Ok(RespirationFeatures {
        rate_bpm,
        tidal_volume: median(&excursions) / calibration_units_per_litre,
        vital_capacity: excursions.iter().fold(0.0f64, |a, &b| a.max(b))
            / calibration_units_per_litre,
        residual_volume: vr_litres,
    })
}
