//! ECG cleanup: baseline-wander removal (high-pass filtering or spline
//! fitting through PQ-segment knots) and DB4 wavelet denoising.

pub mod filter;
pub mod spline;
pub mod wavelet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{SampledSignal, SignalKind};
pub use filter::SosFilter;
pub use spline::NaturalCubicSpline;
pub use wavelet::{dwt_db4, idwt_db4, wavelet_denoise, ThresholdMode, WaveletDecomposition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HighPassSpec {
    pub cutoff_hz: f64,
    pub order: usize,
    pub zero_phase: bool,
}

impl Default for HighPassSpec {
    fn default() -> Self {
        Self {
            cutoff_hz: 0.5,
            order: 2,
            zero_phase: true,
        }
    }
}

impl HighPassSpec {
    pub fn design(&self, rate_hz: f64) -> Result<SosFilter> {
        SosFilter::butterworth_highpass(self.order, self.cutoff_hz, rate_hz)
    }
}

/// Which baseline-wander technique the pipeline uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    /// Spline fitting when at least two knots are available, else high-pass.
    #[default]
    Auto,
    Linear,
    Poly,
}

/// Knot search window relative to each R peak, in milliseconds before it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PqWindow {
    pub start_before_ms: f64,
    pub end_before_ms: f64,
}

impl Default for PqWindow {
    fn default() -> Self {
        Self {
            start_before_ms: 200.0,
            end_before_ms: 66.0,
        }
    }
}

/// High-pass the ECG to strip baseline wander.
pub fn remove_baseline_linear(
    signal: &SampledSignal,
    spec: &HighPassSpec,
) -> Result<SampledSignal> {
    signal.require_kind(SignalKind::Ecg)?;
    let rate = signal.rate_hz();
    let filt = spec.design(rate)?;
    let out = if spec.zero_phase {
        // One cutoff period of edge extension keeps start-up transients short.
        let padlen = (rate / spec.cutoff_hz).ceil() as usize;
        filt.filtfilt(signal.samples(), padlen)
    } else {
        filt.filter(signal.samples())
    };
    signal.with_samples(out)
}

fn check_peaks(r_peaks: &[usize], len: usize) -> Result<()> {
    if r_peaks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("R peaks must be strictly increasing"));
    }
    if let Some(&last) = r_peaks.last() {
        if last >= len {
            return Err(Error::invalid(format!(
                "R peak {last} lies outside a signal of {len} samples"
            )));
        }
    }
    Ok(())
}

/// Local slope magnitude: central difference inside, one-sided at the ends.
fn slope(x: &[f64], i: usize) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    if i == 0 {
        (x[1] - x[0]).abs()
    } else if i == n - 1 {
        (x[n - 1] - x[n - 2]).abs()
    } else {
        (x[i + 1] - x[i - 1]).abs() / 2.0
    }
}

/// One knot per beat: the flattest sample in the PQ search window before
/// each R peak (earliest sample on ties).
pub fn select_pq_knots(
    signal: &SampledSignal,
    r_peaks: &[usize],
    window: &PqWindow,
) -> Result<Vec<usize>> {
    check_peaks(r_peaks, signal.len())?;
    let x = signal.samples();
    let to_samples = |ms: f64| (ms * signal.rate_hz() / 1000.0).round() as usize;
    let back_start = to_samples(window.start_before_ms);
    let back_end = to_samples(window.end_before_ms).max(1);
    Ok(r_peaks
        .iter()
        .map(|&r| {
            if r == 0 {
                return 0;
            }
            let hi = r.saturating_sub(back_end).min(r - 1);
            let lo = r.saturating_sub(back_start).min(hi);
            let mut best = lo;
            let mut best_slope = slope(x, lo);
            for i in lo + 1..=hi {
                let s = slope(x, i);
                if s < best_slope {
                    best = i;
                    best_slope = s;
                }
            }
            best
        })
        .collect())
}

/// Subtract a natural cubic spline drawn through `(knot, signal[knot])`.
pub fn remove_baseline_poly(signal: &SampledSignal, knots: &[usize]) -> Result<SampledSignal> {
    if knots.len() < 2 {
        return Err(Error::invalid(format!(
            "spline baseline needs at least 2 knots, got {}",
            knots.len()
        )));
    }
    check_peaks(knots, signal.len())?;
    let x = signal.samples();
    let spline = NaturalCubicSpline::new(
        knots.iter().map(|&k| k as f64).collect(),
        knots.iter().map(|&k| x[k]).collect(),
    )?;
    let out = x
        .iter()
        .enumerate()
        .map(|(i, &v)| v - spline.eval(i as f64))
        .collect();
    signal.with_samples(out)
}

/// Merge knots that collide (overlapping search windows) into a strictly
/// increasing list.
pub fn dedup_knots(mut knots: Vec<usize>) -> Vec<usize> {
    knots.sort_unstable();
    knots.dedup();
    knots
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ecg(samples: Vec<f64>) -> SampledSignal {
        SampledSignal::ecg(samples, 250.0).unwrap()
    }

    #[test]
    fn dc_offset_removed() {
        let sig = ecg(vec![1.0; 5000]);
        let out = remove_baseline_linear(&sig, &HighPassSpec::default()).unwrap();
        assert_eq!(out.len(), sig.len());
        assert!(out.samples().iter().all(|v| v.abs() < 1e-3));
        let dc: f64 = out.samples().iter().sum::<f64>() / out.len() as f64;
        assert!(dc.abs() < 1e-6);
    }

    #[test]
    fn cutoff_at_nyquist_rejected() {
        let sig = ecg(vec![0.0; 100]);
        let spec = HighPassSpec {
            cutoff_hz: 125.0,
            ..Default::default()
        };
        assert!(matches!(
            remove_baseline_linear(&sig, &spec),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn respiration_signal_rejected() {
        let sig = SampledSignal::respiration(vec![0.0; 100], 25.0).unwrap();
        assert!(remove_baseline_linear(&sig, &HighPassSpec::default()).is_err());
    }

    #[test]
    fn knots_empty_and_per_beat() {
        let sig = ecg(vec![0.0; 1000]);
        assert!(select_pq_knots(&sig, &[], &PqWindow::default())
            .unwrap()
            .is_empty());
        let knots = select_pq_knots(&sig, &[200, 450, 700], &PqWindow::default()).unwrap();
        assert_eq!(knots.len(), 3);
        for (k, r) in knots.iter().zip([200, 450, 700]) {
            assert!(*k < r);
        }
        assert!(select_pq_knots(&sig, &[300, 200], &PqWindow::default()).is_err());
        assert!(select_pq_knots(&sig, &[1000], &PqWindow::default()).is_err());
    }

    #[test]
    fn zero_knots_leave_signal_unchanged() {
        let x: Vec<f64> = (0..500)
            .map(|i| {
                if i % 100 == 0 {
                    0.0
                } else {
                    (i as f64 * 0.37).sin()
                }
            })
            .collect();
        let sig = ecg(x.clone());
        let out = remove_baseline_poly(&sig, &[0, 100, 200, 300, 400]).unwrap();
        for (a, b) in out.samples().iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn poly_needs_two_knots() {
        let sig = ecg(vec![0.0; 10]);
        assert!(matches!(
            remove_baseline_poly(&sig, &[3]),
            Err(Error::InvalidArgument(_))
        ));
    }
}
