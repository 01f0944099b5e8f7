//! Pan-Tompkins QRS detection: band-pass, five-point derivative, squaring,
//! moving-window integration, then dual adaptive thresholds with refractory
//! blanking, T-wave discrimination and search-back.
//!
//! Filters run forward-backward and the derivative and integrator are
//! centred, so stage outputs stay aligned with the input and no group-delay
//! bookkeeping is needed when mapping detections back to R peaks.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::ecg::SosFilter;
use crate::error::{Error, Result};
use crate::signal::{SampledSignal, SignalKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanTompkinsParams {
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub integration_ms: f64,
    pub refractory_ms: f64,
    pub searchback_factor: f64,
    /// Beats closer than this to the previous QRS get the T-wave slope test.
    pub t_wave_window_ms: f64,
    pub learning_s: f64,
}

impl Default for PanTompkinsParams {
    fn default() -> Self {
        Self {
            band_low_hz: 5.0,
            band_high_hz: 15.0,
            integration_ms: 150.0,
            refractory_ms: 200.0,
            searchback_factor: 1.66,
            t_wave_window_ms: 360.0,
            learning_s: 2.0,
        }
    }
}

pub(crate) fn check_detector_input(signal: &SampledSignal) -> Result<()> {
    signal.require_kind(SignalKind::Ecg)?;
    if signal.rate_hz() < 100.0 {
        return Err(Error::invalid(format!(
            "QRS detection needs at least 100 Hz, got {} Hz",
            signal.rate_hz()
        )));
    }
    if signal.duration_seconds() < 5.0 {
        return Err(Error::invalid(format!(
            "QRS detection needs at least 5 s of ECG, got {:.2} s",
            signal.duration_seconds()
        )));
    }
    Ok(())
}

/// Intermediate signals, exposed for inspection and plotting.
#[derive(Debug, Clone)]
pub struct PanTompkinsStages {
    pub bandpassed: Vec<f64>,
    pub derivative: Vec<f64>,
    pub squared: Vec<f64>,
    pub integrated: Vec<f64>,
}

pub fn pan_tompkins_stages(
    signal: &SampledSignal,
    params: &PanTompkinsParams,
) -> Result<PanTompkinsStages> {
    let rate = signal.rate_hz();
    let low = SosFilter::butterworth_lowpass(2, params.band_high_hz, rate)?;
    let high = SosFilter::butterworth_highpass(2, params.band_low_hz, rate)?;
    let pad = (rate / params.band_low_hz).ceil() as usize;
    let bandpassed = high.filtfilt(&low.filtfilt(signal.samples(), pad), pad);

    let n = bandpassed.len();
    let at = |i: isize| bandpassed[i.clamp(0, n as isize - 1) as usize];
    let derivative: Vec<f64> = (0..n as isize)
        .map(|i| (2.0 * at(i + 1) + at(i + 2) - at(i - 2) - 2.0 * at(i - 1)) * rate / 8.0)
        .collect();
    let squared: Vec<f64> = derivative.iter().map(|d| d * d).collect();

    let width = ((params.integration_ms * rate / 1000.0).round() as usize).max(1);
    let half = width / 2;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in &squared {
        prefix.push(prefix.last().unwrap() + v);
    }
    let integrated = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + width - half).min(n);
            (prefix[hi] - prefix[lo]) / width as f64
        })
        .collect();
    Ok(PanTompkinsStages {
        bandpassed,
        derivative,
        squared,
        integrated,
    })
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    index: usize,
    peak_integrated: f64,
    peak_filtered: f64,
    r_location: usize,
    slope: f64,
}

struct Levels {
    signal: f64,
    noise: f64,
}

impl Levels {
    fn threshold(&self) -> f64 {
        self.noise + 0.25 * (self.signal - self.noise)
    }

    fn update_signal(&mut self, peak: f64, weight: f64) {
        self.signal = weight * peak + (1.0 - weight) * self.signal;
    }

    fn update_noise(&mut self, peak: f64) {
        self.noise = 0.125 * peak + 0.875 * self.noise;
    }
}

/// Running state of the adaptive thresholding pass.
struct Detector {
    integ: Levels,
    filt: Levels,
    accepted: Vec<Candidate>,
    /// Last eight RR intervals, in samples.
    rr_history: VecDeque<usize>,
    /// Peaks rejected since the last accepted QRS; search-back draws on these.
    noise_since_last: Vec<Candidate>,
    refractory: usize,
    t_wave_window: usize,
    searchback_factor: f64,
}

impl Detector {
    fn accept(&mut self, c: Candidate, from_search_back: bool) {
        let weight = if from_search_back { 0.25 } else { 0.125 };
        self.integ.update_signal(c.peak_integrated, weight);
        self.filt.update_signal(c.peak_filtered, weight);
        if let Some(prev) = self.accepted.last() {
            if self.rr_history.len() == 8 {
                self.rr_history.pop_front();
            }
            self.rr_history.push_back(c.index - prev.index);
        }
        self.noise_since_last.retain(|o| o.index > c.index);
        self.accepted.push(c);
    }

    fn rr_average(&self) -> Option<f64> {
        (!self.rr_history.is_empty())
            .then(|| self.rr_history.iter().sum::<usize>() as f64 / self.rr_history.len() as f64)
    }

    /// Recover missed beats when nothing was accepted for `searchback_factor`
    /// average RR intervals, using the halved thresholds.
    fn search_back(&mut self, now: usize) {
        loop {
            let (Some(last), Some(avg)) = (self.accepted.last().copied(), self.rr_average()) else {
                return;
            };
            if (now - last.index) as f64 <= self.searchback_factor * avg {
                return;
            }
            let thr_i2 = 0.5 * self.integ.threshold();
            let thr_f2 = 0.5 * self.filt.threshold();
            let best = self
                .noise_since_last
                .iter()
                .filter(|c| c.index > last.index + self.refractory && c.index < now)
                .filter(|c| c.peak_integrated > thr_i2 && c.peak_filtered > thr_f2)
                .max_by(|a, b| a.peak_integrated.total_cmp(&b.peak_integrated))
                .copied();
            match best {
                Some(c) => self.accept(c, true),
                None => return,
            }
        }
    }

    fn offer(&mut self, c: Candidate) {
        let last = self.accepted.last().copied();
        if last.is_some_and(|l| c.index - l.index < self.refractory) {
            return;
        }
        let above =
            c.peak_integrated > self.integ.threshold() && c.peak_filtered > self.filt.threshold();
        let t_wave =
            last.is_some_and(|l| c.index - l.index < self.t_wave_window && c.slope < 0.5 * l.slope);
        if above && !t_wave {
            self.accept(c, false);
        } else {
            self.integ.update_noise(c.peak_integrated);
            self.filt.update_noise(c.peak_filtered);
            self.noise_since_last.push(c);
        }
    }
}

/// R-peak sample indices, strictly increasing.
pub fn pan_tompkins(signal: &SampledSignal) -> Result<Vec<usize>> {
    pan_tompkins_with(signal, &PanTompkinsParams::default())
}

pub fn pan_tompkins_with(signal: &SampledSignal, params: &PanTompkinsParams) -> Result<Vec<usize>> {
    check_detector_input(signal)?;
    let rate = signal.rate_hz();
    let stages = pan_tompkins_stages(signal, params)?;
    let integ = &stages.integrated;
    let n = integ.len();
    let ms = |v: f64| (v * rate / 1000.0).round() as usize;
    let half_window = ms(params.integration_ms / 2.0).max(1);
    let refractory = ms(params.refractory_ms);
    let t_wave_window = ms(params.t_wave_window_ms);

    // Candidate peaks: local maxima of the integrated signal that dominate
    // their half-window neighbourhood.
    let mut candidates = Vec::new();
    for i in 1..n.saturating_sub(1) {
        let v = integ[i];
        if !(v > 0.0 && v > integ[i - 1] && v >= integ[i + 1]) {
            continue;
        }
        let lo = i.saturating_sub(half_window);
        let hi = (i + half_window + 1).min(n);
        if integ[lo..hi].iter().any(|&u| u > v) {
            continue;
        }
        let (r_location, peak_filtered) = (lo..hi).map(|k| (k, stages.bandpassed[k].abs())).fold(
            (lo, f64::NEG_INFINITY),
            |best, cur| if cur.1 > best.1 { cur } else { best },
        );
        let slope = stages.derivative[lo..hi]
            .iter()
            .fold(0.0f64, |m, d| m.max(d.abs()));
        candidates.push(Candidate {
            index: i,
            peak_integrated: v,
            peak_filtered,
            r_location,
            slope,
        });
    }
    if candidates.is_empty() {
        return Ok(Vec::new());
    }

    let mut learn = ((params.learning_s * rate) as usize).clamp(1, n);
    // A flat opening stretch would start every threshold at zero.
    if integ[..learn].iter().all(|&v| v <= 0.0) {
        learn = n;
    }
    let max_i = integ[..learn].iter().fold(0.0f64, |m, &v| m.max(v));
    let mean_i = integ[..learn].iter().sum::<f64>() / learn as f64;
    let max_f = stages.bandpassed[..learn]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let mean_f = stages.bandpassed[..learn]
        .iter()
        .map(|v| v.abs())
        .sum::<f64>()
        / learn as f64;
    let mut detector = Detector {
        integ: Levels {
            signal: max_i / 3.0,
            noise: mean_i / 2.0,
        },
        filt: Levels {
            signal: max_f / 3.0,
            noise: mean_f / 2.0,
        },
        accepted: Vec::new(),
        rr_history: VecDeque::with_capacity(8),
        noise_since_last: Vec::new(),
        refractory,
        t_wave_window,
        searchback_factor: params.searchback_factor,
    };
    for c in candidates {
        detector.search_back(c.index);
        detector.offer(c);
    }
    detector.search_back(n);

    let mut peaks: Vec<usize> = detector.accepted.iter().map(|c| c.r_location).collect();
    peaks.sort_unstable();
    peaks.dedup();
    Ok(peaks)
}
