//! Detector accuracy against generator ground truth.

use edgecare::ecg::{wavelet_denoise, ThresholdMode};
use edgecare::qrs::{count_matches, pan_tompkins, wavelet_qrs, BeatLabel};
use edgecare::synth::{add_white_noise, render_beats, synthetic_ecg, SyntheticEcg};
use edgecare::SampledSignal;
use proptest::prelude::*;

const RATE: f64 = 250.0;
/// +-50 ms at 250 Hz.
const TOLERANCE: usize = 12;

fn denoised(ecg: &SyntheticEcg, seed: u64) -> SampledSignal {
    let noisy = add_white_noise(ecg.signal.samples(), 5.0, seed);
    wavelet_denoise(
        &ecg.signal.with_samples(noisy).unwrap(),
        4,
        ThresholdMode::Hard,
    )
    .unwrap()
}

struct Tally {
    truth: usize,
    detected: usize,
    matched: usize,
}

impl Tally {
    fn new() -> Self {
        Tally {
            truth: 0,
            detected: 0,
            matched: 0,
        }
    }

    fn add(&mut self, truth: &[usize], detected: &[usize]) {
        self.truth += truth.len();
        self.detected += detected.len();
        self.matched += count_matches(truth, detected, TOLERANCE);
    }

    fn assert_at_least(&self, what: &str, floor: f64) {
        let se = self.matched as f64 / self.truth as f64;
        let ppv = self.matched as f64 / self.detected as f64;
        assert!(
            se >= floor && ppv >= floor,
            "{what}: sensitivity {se:.4}, PPV {ppv:.4}"
        );
    }
}

fn wavelet_peaks(signal: &SampledSignal) -> Vec<usize> {
    wavelet_qrs(signal)
        .unwrap()
        .iter()
        .filter(|b| b.label == BeatLabel::Qrs)
        .map(|b| b.r_peak)
        .collect()
}

#[test]
fn both_detectors_across_rates_clean_and_noisy() {
    let mut tallies: Vec<Tally> = (0..4).map(|_| Tally::new()).collect();
    for bpm in (40..=180).step_by(10) {
        let ecg = synthetic_ecg(bpm as f64, 60.0, RATE).unwrap();
        for (k, signal) in [ecg.signal.clone(), denoised(&ecg, bpm as u64)]
            .iter()
            .enumerate()
        {
            tallies[2 * k].add(&ecg.r_peaks, &pan_tompkins(signal).unwrap());
            tallies[2 * k + 1].add(&ecg.r_peaks, &wavelet_peaks(signal));
        }
    }
    tallies[0].assert_at_least("pan-tompkins clean", 0.99);
    tallies[1].assert_at_least("wavelet clean", 0.99);
    tallies[2].assert_at_least("pan-tompkins noisy", 0.99);
    tallies[3].assert_at_least("wavelet noisy", 0.99);
}

#[test]
fn sixty_bpm_minute_gives_sixty_beats() {
    let ecg = synthetic_ecg(60.0, 60.0, RATE).unwrap();
    let peaks = pan_tompkins(&ecg.signal).unwrap();
    assert_eq!(peaks.len(), 60);
    for (p, t) in peaks.iter().zip(&ecg.r_peaks) {
        assert!(p.abs_diff(*t) <= TOLERANCE, "{p} vs {t}");
    }
}

#[test]
fn beats_inside_refractory_period_count_once() {
    let samples = render_beats(&[1.0, 1.15], 1.0, (6.0 * RATE) as usize, RATE, 1.0);
    let signal = SampledSignal::ecg(samples, RATE).unwrap();
    assert_eq!(pan_tompkins(&signal).unwrap().len(), 1);
}

#[test]
fn flat_signal_has_no_beats() {
    let signal = SampledSignal::ecg(vec![0.0; 2500], RATE).unwrap();
    assert!(pan_tompkins(&signal).unwrap().is_empty());
    assert!(wavelet_qrs(&signal).unwrap().is_empty());
}

#[test]
fn detector_preconditions() {
    let short = SampledSignal::ecg(vec![0.0; 1000], RATE).unwrap();
    assert!(pan_tompkins(&short).is_err());
    assert!(wavelet_qrs(&short).is_err());
    let slow = SampledSignal::ecg(vec![0.0; 1000], 50.0).unwrap();
    assert!(pan_tompkins(&slow).is_err());
    let resp = SampledSignal::respiration(vec![0.0; 2500], RATE).unwrap();
    assert!(pan_tompkins(&resp).is_err());
}

#[test]
fn five_minutes_is_fast() {
    let ecg = synthetic_ecg(75.0, 300.0, RATE).unwrap();
    let start = std::time::Instant::now();
    let peaks = pan_tompkins(&ecg.signal).unwrap();
    let elapsed = start.elapsed();
    assert_eq!(peaks.len(), ecg.r_peaks.len());
    assert!(elapsed.as_secs_f64() < 1.0, "{elapsed:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pan_tompkins_ignores_amplitude_scale(bpm in 45.0f64..170.0, scale in 0.01f64..100.0) {
        let ecg = synthetic_ecg(bpm, 20.0, RATE).unwrap();
        let scaled: Vec<f64> = ecg.signal.samples().iter().map(|v| v * scale).collect();
        let a = pan_tompkins(&ecg.signal).unwrap();
        let b = pan_tompkins(&ecg.signal.with_samples(scaled).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn pan_tompkins_output_strictly_increases(bpm in 40.0f64..180.0, seed in 0u64..1000) {
        let ecg = synthetic_ecg(bpm, 20.0, RATE).unwrap();
        let peaks = pan_tompkins(&denoised(&ecg, seed)).unwrap();
        prop_assert!(peaks.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn wavelet_annotations_are_ordered_and_sized(bpm in 40.0f64..180.0, seed in 0u64..1000, noisy in any::<bool>()) {
        let ecg = synthetic_ecg(bpm, 20.0, RATE).unwrap();
        let signal = if noisy { denoised(&ecg, seed) } else { ecg.signal.clone() };
        let beats = wavelet_qrs(&signal).unwrap();
        for w in beats.windows(2) {
            prop_assert!(w[0].j_point < w[1].pq_junction);
        }
        for b in beats.iter().filter(|b| b.label == BeatLabel::Qrs) {
            prop_assert!(b.pq_junction < b.r_peak && b.r_peak < b.j_point);
            let ms = (b.j_point - b.pq_junction) as f64 * 1000.0 / RATE;
            prop_assert!((60.0..=140.0).contains(&ms));
        }
    }
}
