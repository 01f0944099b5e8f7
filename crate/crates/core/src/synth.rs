//! Deterministic synthetic waveforms with known ground truth, used by tests,
//! fixtures and demos.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::signal::{SampledSignal, SignalKind};
use crate::time::TimestampMs;

/// Gaussian component of a heartbeat: amplitude (mV), centre and width in
/// seconds relative to the R peak.
#[derive(Debug, Clone, Copy)]
struct Wave {
    amplitude: f64,
    centre_s: f64,
    sigma_s: f64,
}

/// P, Q, R, S, T components. P and T positions and widths scale with
/// `sqrt(RR)` so waves stay separated at high rates; the QRS does not.
fn beat_waves(rr_s: f64, r_amplitude: f64) -> [Wave; 5] {
    let s = rr_s.sqrt();
    [
        Wave {
            amplitude: 0.15,
            centre_s: -0.22 * s,
            sigma_s: 0.018 * s,
        },
        Wave {
            amplitude: -0.12,
            centre_s: -0.025,
            sigma_s: 0.008,
        },
        Wave {
            amplitude: r_amplitude,
            centre_s: 0.0,
            sigma_s: 0.010,
        },
        Wave {
            amplitude: -0.22,
            centre_s: 0.027,
            sigma_s: 0.008,
        },
        Wave {
            amplitude: 0.30,
            centre_s: 0.25 * s,
            sigma_s: 0.04 * s,
        },
    ]
}

#[derive(Debug, Clone)]
pub struct SyntheticEcg {
    pub signal: SampledSignal,
    /// Sample index of every R peak placed by the generator.
    pub r_peaks: Vec<usize>,
}

/// Regular sinus rhythm at `bpm`. The first R peak sits half an RR interval
/// after the start; R amplitude is 1 mV.
pub fn synthetic_ecg(bpm: f64, duration_s: f64, rate_hz: f64) -> Result<SyntheticEcg> {
    synthetic_ecg_at(bpm, duration_s, rate_hz, 0)
}

pub fn synthetic_ecg_at(
    bpm: f64,
    duration_s: f64,
    rate_hz: f64,
    start_time: TimestampMs,
) -> Result<SyntheticEcg> {
    let rr = 60.0 / bpm;
    let n = (duration_s * rate_hz).round() as usize;
    let mut beat_times = Vec::new();
    let mut t = 0.5 * rr;
    while t < duration_s {
        beat_times.push(t);
        t += rr;
    }
    let samples = render_beats(&beat_times, rr, n, rate_hz, 1.0);
    let r_peaks = beat_times
        .iter()
        .map(|t| (t * rate_hz).round() as usize)
        .filter(|&i| i < n)
        .collect();
    Ok(SyntheticEcg {
        signal: SampledSignal::new(samples, rate_hz, start_time, SignalKind::Ecg)?,
        r_peaks,
    })
}

/// Render beats at explicit R-peak times (seconds). `rr_s` sets the P/T
/// geometry for every beat.
pub fn render_beats(
    beat_times_s: &[f64],
    rr_s: f64,
    n: usize,
    rate_hz: f64,
    r_amplitude: f64,
) -> Vec<f64> {
    let mut samples = vec![0.0; n];
    let waves = beat_waves(rr_s, r_amplitude);
    for &bt in beat_times_s {
        for w in &waves {
            let centre = bt + w.centre_s;
            let reach = 5.0 * w.sigma_s;
            let lo = ((centre - reach) * rate_hz).floor().max(0.0) as usize;
            let hi = (((centre + reach) * rate_hz).ceil().max(0.0) as usize).min(n);
            for (i, slot) in samples.iter_mut().enumerate().take(hi).skip(lo) {
                let dt = i as f64 / rate_hz - centre;
                *slot += w.amplitude * (-0.5 * (dt / w.sigma_s).powi(2)).exp();
            }
        }
    }
    samples
}

/// Add seeded white Gaussian noise at the requested SNR (relative to the mean
/// power of the input).
pub fn add_white_noise(samples: &[f64], snr_db: f64, seed: u64) -> Vec<f64> {
    let power = samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64;
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    samples
        .iter()
        .map(|v| v + normal.sample(&mut rng))
        .collect()
}

/// `10 log10(sum clean^2 / sum (estimate - clean)^2)`.
pub fn snr_db(clean: &[f64], estimate: &[f64]) -> f64 {
    let signal: f64 = clean.iter().map(|v| v * v).sum();
    let noise: f64 = clean
        .iter()
        .zip(estimate)
        .map(|(c, e)| (e - c) * (e - c))
        .sum();
    10.0 * (signal / noise).log10()
}

pub fn sinusoid(freq_hz: f64, amplitude: f64, rate_hz: f64, duration_s: f64) -> Vec<f64> {
    let n = (duration_s * rate_hz).round() as usize;
    (0..n)
        .map(|i| amplitude * (2.0 * PI * freq_hz * i as f64 / rate_hz).sin())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixty_bpm_places_one_peak_per_second() {
        let s = synthetic_ecg(60.0, 10.0, 250.0).unwrap();
        assert_eq!(s.r_peaks.len(), 10);
        assert_eq!(s.r_peaks[0], 125);
        assert_eq!(s.r_peaks[1] - s.r_peaks[0], 250);
        let peak = s.signal.samples()[125];
        assert!((peak - 1.0).abs() < 0.01);
    }

    #[test]
    fn noise_is_seeded_and_at_requested_level() {
        let clean = sinusoid(1.0, 1.0, 100.0, 100.0);
        let a = add_white_noise(&clean, 5.0, 7);
        let b = add_white_noise(&clean, 5.0, 7);
        assert_eq!(a, b);
        assert!((snr_db(&clean, &a) - 5.0).abs() < 0.2);
    }
}
