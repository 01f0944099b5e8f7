//! Heart-rate variability from an RR series.
//!
//! Time-domain statistics use the population (1/n) variance throughout.
//! Segment statistics bin intervals into 300 s bins anchored at the first
//! beat, each interval belonging to the bin of the beat that closes it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qrs::RRSeries;
use crate::signal::{dft_magnitude, hamming_window};
use crate::stats::{mean, population_sd};

pub const SEGMENT_S: f64 = 300.0;
pub const LF_BAND: (f64, f64) = (0.03, 0.15);
pub const HF_BAND: (f64, f64) = (0.15, 0.40);
/// Tachogram resampling rate.
pub const TACHOGRAM_HZ: f64 = 4.0;
pub const MIN_SPECTRAL_SECONDS: f64 = 120.0;
pub const MIN_SPECTRAL_BEATS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrvTimeFeatures {
    pub sdnn_ms: f64,
    /// `None` when the recording is shorter than two usable segments.
    pub sdann_ms: Option<f64>,
    pub sdnnidx_ms: Option<f64>,
    pub pnn50_pct: f64,
    pub rmssd_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrvFreqFeatures {
    /// ms^2
    pub lf_power: f64,
    /// ms^2
    pub hf_power: f64,
    pub lf_band: (f64, f64),
    pub hf_band: (f64, f64),
}

fn require_two(intervals: &[f64]) -> Result<()> {
    if intervals.len() < 2 {
        return Err(Error::no_data(format!(
            "need at least 2 RR intervals, have {}",
            intervals.len()
        )));
    }
    Ok(())
}

pub fn sdnn(rr: &RRSeries) -> Result<f64> {
    let intervals = rr.intervals();
    require_two(&intervals)?;
    Ok(population_sd(&intervals))
}

/// Intervals grouped by 300 s bin; bins with fewer than two intervals are
/// dropped.
fn segments(rr: &RRSeries, segment_s: f64) -> Result<Vec<Vec<f64>>> {
    if !(segment_s.is_finite() && segment_s > 0.0) {
        return Err(Error::invalid(format!(
            "segment length must be > 0, got {segment_s}"
        )));
    }
    let Some(origin) = rr.first_beat_ms() else {
        return Err(Error::no_data("empty RR series"));
    };
    let width = segment_s * 1000.0;
    let mut bins: Vec<Vec<f64>> = Vec::new();
    for (t, v) in rr.timed_intervals() {
        let k = ((t - origin) / width).floor() as usize;
        if bins.len() <= k {
            bins.resize_with(k + 1, Vec::new);
        }
        bins[k].push(v);
    }
    bins.retain(|b| b.len() >= 2);
    if bins.len() < 2 {
        return Err(Error::no_data(format!(
            "need at least 2 usable {segment_s} s segments, have {}",
            bins.len()
        )));
    }
    Ok(bins)
}

pub fn sdann(rr: &RRSeries) -> Result<f64> {
    sdann_with(rr, SEGMENT_S)
}

pub fn sdann_with(rr: &RRSeries, segment_s: f64) -> Result<f64> {
    let means: Vec<f64> = segments(rr, segment_s)?.iter().map(|b| mean(b)).collect();
    Ok(population_sd(&means))
}

pub fn sdnnidx(rr: &RRSeries) -> Result<f64> {
    sdnnidx_with(rr, SEGMENT_S)
}

pub fn sdnnidx_with(rr: &RRSeries, segment_s: f64) -> Result<f64> {
    let sds: Vec<f64> = segments(rr, segment_s)?
        .iter()
        .map(|b| population_sd(b))
        .collect();
    Ok(mean(&sds))
}

/// Percentage of successive differences strictly above 50 ms. Differences
/// are taken within runs only; a rejected interval breaks adjacency.
pub fn pnn50(rr: &RRSeries) -> Result<f64> {
    let diffs = successive_differences(rr);
    require_two(&rr.intervals())?;
    if diffs.is_empty() {
        return Err(Error::no_data("no adjacent RR intervals"));
    }
    let over = diffs.iter().filter(|d| d.abs() > 50.0).count();
    Ok(100.0 * over as f64 / diffs.len() as f64)
}

pub fn rmssd(rr: &RRSeries) -> Result<f64> {
    let diffs = successive_differences(rr);
    require_two(&rr.intervals())?;
    if diffs.is_empty() {
        return Err(Error::no_data("no adjacent RR intervals"));
    }
    Ok((diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt())
}

fn successive_differences(rr: &RRSeries) -> Vec<f64> {
    rr.runs()
        .iter()
        .flat_map(|run| run.intervals_ms().windows(2).map(|w| w[1] - w[0]))
        .collect()
}

/// All time-domain features; segment statistics are `None` when the
/// recording is too short for them.
pub fn time_features(rr: &RRSeries) -> Result<HrvTimeFeatures> {
    Ok(HrvTimeFeatures {
        sdnn_ms: sdnn(rr)?,
        sdann_ms: optional(sdann(rr))?,
        sdnnidx_ms: optional(sdnnidx(rr))?,
        pnn50_pct: pnn50(rr)?,
        rmssd_ms: rmssd(rr)?,
    })
}

fn optional(value: Result<f64>) -> Result<Option<f64>> {
    match value {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_no_data() => Ok(None),
        Err(e) => Err(e),
    }
}

/// The evenly resampled, mean-removed tachogram (ms) used for the spectrum.
pub fn tachogram(rr: &RRSeries) -> Result<Vec<f64>> {
    let points: Vec<(f64, f64)> = rr.timed_intervals().collect();
    let beats = rr.len() + rr.runs().len();
    let span_s = match (points.first(), points.last()) {
        (Some(a), Some(b)) => (b.0 - a.0) / 1000.0,
        _ => 0.0,
    };
    let total_s = match (rr.first_beat_ms(), rr.last_beat_ms()) {
        (Some(a), Some(b)) => (b - a) / 1000.0,
        _ => 0.0,
    };
    if total_s < MIN_SPECTRAL_SECONDS || beats < MIN_SPECTRAL_BEATS || points.len() < 2 {
        return Err(Error::no_data(format!(
            "spectral HRV needs {MIN_SPECTRAL_SECONDS} s and {MIN_SPECTRAL_BEATS} beats, have {total_s:.1} s and {beats}"
        )));
    }
    let n = (span_s * TACHOGRAM_HZ).floor() as usize + 1;
    let t0 = points[0].0;
    let mut j = 0;
    let mut samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = t0 + i as f64 * 1000.0 / TACHOGRAM_HZ;
            while j + 2 < points.len() && points[j + 1].0 <= t {
                j += 1;
            }
            let (a, b) = (points[j], points[j + 1]);
            let f = ((t - a.0) / (b.0 - a.0)).clamp(0.0, 1.0);
            a.1 + f * (b.1 - a.1)
        })
        .collect();
    let m = mean(&samples);
    samples.iter_mut().for_each(|v| *v -= m);
    Ok(samples)
}

/// LF and HF power (ms^2): Hamming-windowed periodogram of the tachogram,
/// integrated by the rectangle rule over bins whose centre lies in the band
/// (LF half-open at 0.15 Hz so no bin is counted twice).
pub fn band_powers(rr: &RRSeries) -> Result<HrvFreqFeatures> {
    let x = tachogram(rr)?;
    let w = hamming_window(x.len())?;
    let windowed: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a * b).collect();
    let spectrum = dft_magnitude(&windowed, TACHOGRAM_HZ, 0)?;
    let energy: f64 = w.iter().map(|v| v * v).sum();
    let df = spectrum.bin_width_hz;
    let mut lf = 0.0;
    let mut hf = 0.0;
    for (k, mag) in spectrum.magnitudes.iter().enumerate().skip(1) {
        let f = spectrum.frequency(k);
        let psd = 2.0 * mag * mag / (TACHOGRAM_HZ * energy);
        if f >= LF_BAND.0 && f < LF_BAND.1 {
            lf += psd * df;
        } else if f >= HF_BAND.0 && f <= HF_BAND.1 {
            hf += psd * df;
        }
    }
    Ok(HrvFreqFeatures {
        lf_power: lf,
        hf_power: hf,
        lf_band: LF_BAND,
        hf_band: HF_BAND,
    })
}
