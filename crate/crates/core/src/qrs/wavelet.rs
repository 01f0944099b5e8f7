//! Wavelet-spike QRS delineation.
//!
//! The ECG is decomposed with DB4, details are shrunk with the universal
//! threshold and the approximation band (P/T waves, residual baseline) is
//! discarded. What survives the reconstruction is a spike train at the QRS
//! complexes. Spikes are seeded where the magnitude clears a level set from
//! the whole recording. Each spike's boundaries (PQ junction and J point)
//! enclose all but a small tail of its smoothed energy, counted above a floor
//! relative to its own peak, so the measured length does not depend on the
//! beat's amplitude and shrugs off small noise lobes at its flanks.

use serde::{Deserialize, Serialize};

use super::pan_tompkins::check_detector_input;
use super::{BeatAnnotation, BeatLabel};
use crate::ecg::wavelet::{dwt_db4, idwt_db4, threshold_details, ThresholdMode};
use crate::error::Result;
use crate::signal::SampledSignal;
use crate::stats::percentile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveletQrsParams {
    pub qrs_min_ms: f64,
    pub qrs_max_ms: f64,
    /// Spikes whose peak voltage stays below this are artifacts (mV).
    pub artifact_threshold_mv: f64,
    /// Seeding level as a fraction of the 99th percentile of the local
    /// maxima of the spike-train magnitude (a typical R spike height that
    /// does not depend on how many beats the recording holds).
    pub detection_fraction: f64,
    /// Share of a spike's energy allowed outside each boundary.
    pub energy_tail: f64,
    /// Width of the centred moving average applied to the spike energy.
    pub smoothing_ms: f64,
    /// Energy below `(floor_fraction * peak)^2` is ignored when measuring a
    /// spike, so small residual-noise lobes beside it do not stretch it.
    pub floor_fraction: f64,
    /// Sub-threshold gaps up to this long (zero crossings between lobes) do
    /// not split a seed.
    pub merge_gap_ms: f64,
    /// Decomposition depth; `None` picks the depth whose approximation band
    /// ends near 8 Hz.
    pub levels: Option<usize>,
    pub threshold_mode: ThresholdMode,
}

impl Default for WaveletQrsParams {
    fn default() -> Self {
        Self {
            qrs_min_ms: 60.0,
            qrs_max_ms: 140.0,
            artifact_threshold_mv: 0.15,
            detection_fraction: 0.3,
            energy_tail: 0.045,
            floor_fraction: 0.1,
            smoothing_ms: 40.0,
            merge_gap_ms: 12.0,
            levels: None,
            threshold_mode: ThresholdMode::Hard,
        }
    }
}

/// `round(log2(rate / 15.625))`, i.e. 4 levels at 250 Hz.
pub fn default_levels(rate_hz: f64) -> usize {
    ((rate_hz / 15.625).log2().round() as usize).max(1)
}

/// The thresholded detail-only reconstruction the spikes are read from.
pub fn spike_train(signal: &SampledSignal, params: &WaveletQrsParams) -> Result<Vec<f64>> {
    let levels = params
        .levels
        .unwrap_or_else(|| default_levels(signal.rate_hz()));
    let mut dec = dwt_db4(signal.samples(), levels)?;
    threshold_details(&mut dec, params.threshold_mode);
    dec.approximation.iter_mut().for_each(|a| *a = 0.0);
    idwt_db4(&dec)
}

pub fn wavelet_qrs(signal: &SampledSignal) -> Result<Vec<BeatAnnotation>> {
    wavelet_qrs_with(signal, &WaveletQrsParams::default())
}

pub fn wavelet_qrs_with(
    signal: &SampledSignal,
    params: &WaveletQrsParams,
) -> Result<Vec<BeatAnnotation>> {
    check_detector_input(signal)?;
    let rate = signal.rate_hz();
    let n = signal.len();
    let spikes = spike_train(signal, params)?;
    let magnitude: Vec<f64> = spikes.iter().map(|v| v.abs()).collect();
    let maxima: Vec<f64> = (1..n.saturating_sub(1))
        .filter(|&i| magnitude[i] > magnitude[i - 1] && magnitude[i] >= magnitude[i + 1])
        .map(|i| magnitude[i])
        .collect();
    if maxima.is_empty() {
        return Ok(Vec::new());
    }
    let level = params.detection_fraction * percentile(&maxima, 0.99);
    if !(level > 0.0) {
        return Ok(Vec::new());
    }
    let gap = (params.merge_gap_ms * rate / 1000.0).round() as usize;

    let mut seeds: Vec<(usize, usize)> = Vec::new();
    for (i, _) in magnitude.iter().enumerate().filter(|(_, &m)| m > level) {
        match seeds.last_mut() {
            Some(run) if i - run.1 <= gap + 1 => run.1 = i,
            _ => seeds.push((i, i)),
        }
    }

    let smooth = ((params.smoothing_ms * rate / 1000.0).round() as usize).max(1);
    let energy = moving_average(&spikes.iter().map(|v| v * v).collect::<Vec<_>>(), smooth);
    let reach = (params.qrs_max_ms * rate / 1000.0).round() as usize;
    let mut beats: Vec<(usize, usize, usize)> = Vec::new();
    for (lo, hi) in seeds {
        let peak = argmax(&magnitude, lo, hi);
        let floor = params.floor_fraction.powi(2) * energy[peak];
        let (e_on, e_off) = energy_extent(&energy, floor, peak, reach, params.energy_tail);
        let onset = e_on.min(lo).min(peak.saturating_sub(1));
        let offset = e_off.max(hi).max(peak + 1).min(n - 1);
        match beats.last_mut() {
            // A seed inside an existing spike is the same complex; the
            // stronger peak keeps its extent.
            Some(prev) if peak <= prev.2 => {
                if magnitude[peak] > magnitude[prev.1] {
                    *prev = (onset.max(prev.0), peak, offset.max(prev.2));
                }
            }
            Some(prev) => {
                let onset = onset.max(prev.2 + 1);
                beats.push((onset, peak, offset));
            }
            None => beats.push((onset, peak, offset)),
        }
    }

    Ok(beats
        .into_iter()
        .map(|(onset, r_peak, offset)| {
            let duration_ms = (offset - onset) as f64 * 1000.0 / rate;
            let label = if duration_ms < params.qrs_min_ms || duration_ms > params.qrs_max_ms {
                BeatLabel::Noise
            } else if magnitude[r_peak] < params.artifact_threshold_mv {
                BeatLabel::Artifact
            } else {
                BeatLabel::Qrs
            };
            BeatAnnotation {
                r_peak,
                pq_junction: onset,
                j_point: offset,
                label,
            }
        })
        .collect())
}

fn moving_average(values: &[f64], width: usize) -> Vec<f64> {
    let n = values.len();
    let half = width / 2;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + width - half).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// First index of the maximum over `lo..=hi`.
fn argmax(values: &[f64], lo: usize, hi: usize) -> usize {
    (lo..=hi).fold(
        lo,
        |best, k| if values[k] > values[best] { k } else { best },
    )
}

/// Smallest span around `peak` (within `reach` on either side) that leaves
/// at most `tail` of the above-floor energy outside on each side.
fn energy_extent(
    energy: &[f64],
    floor: f64,
    peak: usize,
    reach: usize,
    tail: f64,
) -> (usize, usize) {
    let lo = peak.saturating_sub(reach);
    let hi = (peak + reach).min(energy.len() - 1);
    let excess = |k: usize| (energy[k] - floor).max(0.0);
    let total: f64 = (lo..=hi).map(excess).sum();
    let budget = tail * total;
    let mut onset = lo;
    let mut acc = 0.0;
    while onset < peak && acc + excess(onset) <= budget {
        acc += excess(onset);
        onset += 1;
    }
    let mut offset = hi;
    acc = 0.0;
    while offset > peak && acc + excess(offset) <= budget {
        acc += excess(offset);
        offset -= 1;
    }
    (onset, offset)
}
