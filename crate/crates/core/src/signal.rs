//! Uniformly sampled waveforms and the spectral primitives shared by ECG
//! preprocessing, HRV frequency analysis and respiration-rate estimation.

use std::f64::consts::PI;
use std::io::Read;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::TimestampMs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SignalKind {
    Ecg,
    Respiration,
}

/// A uniformly sampled waveform: millivolts for ECG, calibrated volume units
/// for respiration.
///
/// Construction rejects a non-positive rate and non-finite samples, so every
/// value of this type that reaches an algorithm is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSignal {
    samples: Vec<f64>,
    rate_hz: f64,
    start_time: TimestampMs,
    kind: SignalKind,
}

impl SampledSignal {
    pub fn new(
        samples: Vec<f64>,
        rate_hz: f64,
        start_time: TimestampMs,
        kind: SignalKind,
    ) -> Result<Self> {
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(Error::invalid(format!(
                "sample rate must be > 0, got {rate_hz}"
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            rate_hz,
            start_time,
            kind,
        })
    }

    pub fn ecg(samples: Vec<f64>, rate_hz: f64) -> Result<Self> {
        Self::new(samples, rate_hz, 0, SignalKind::Ecg)
    }

    pub fn respiration(samples: Vec<f64>, rate_hz: f64) -> Result<Self> {
        Self::new(samples, rate_hz, 0, SignalKind::Respiration)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn start_time(&self) -> TimestampMs {
        self.start_time
    }

    pub fn kind(&self) -> SignalKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.rate_hz
    }

    /// Absolute time of sample `index`, in fractional epoch milliseconds.
    pub fn time_of(&self, index: usize) -> f64 {
        self.start_time as f64 + index as f64 * 1000.0 / self.rate_hz
    }

    /// Same rate, start and kind, new samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, self.rate_hz, self.start_time, self.kind)
    }

    pub(crate) fn require_kind(&self, kind: SignalKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::invalid(format!(
                "expected a {kind:?} signal, got {:?}",
                self.kind
            )));
        }
        Ok(())
    }
}

/// One-sided magnitude spectrum; `magnitudes[k]` sits at `k * bin_width_hz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub magnitudes: Vec<f64>,
    pub bin_width_hz: f64,
    pub origin: TimestampMs,
}

impl Spectrum {
    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_width_hz
    }
}

/// Symmetric Hamming window, `0.54 - 0.46 cos(2πk/(n-1))`.
pub fn hamming_window(n: usize) -> Result<Vec<f64>> {
    match n {
        0 => Err(Error::invalid("window length must be at least 1")),
        1 => Ok(vec![1.0]),
        _ => {
            // Mirror the first half so the window is exactly symmetric.
            let denom = (n - 1) as f64;
            let mut w: Vec<f64> = (0..n.div_ceil(2))
                .map(|k| 0.54 - 0.46 * (2.0 * PI * k as f64 / denom).cos())
                .collect();
            w.extend(w[..n / 2].iter().rev().copied().collect::<Vec<_>>());
            Ok(w)
        }
    }
}

/// Magnitudes of the discrete Fourier transform for bins `0..=n/2`.
///
/// No zero padding: the transform length equals the input length, so the bin
/// width is exactly `rate_hz / n`.
pub fn dft_magnitude(samples: &[f64], rate_hz: f64, origin: TimestampMs) -> Result<Spectrum> {
    if samples.len() < 2 {
        return Err(Error::invalid("DFT needs at least 2 samples"));
    }
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(Error::invalid(format!(
            "sample rate must be > 0, got {rate_hz}"
        )));
    }
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite sample at index {i}")));
    }
    let n = samples.len();
    let mut buffer: Vec<Complex<f64>> = samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buffer);
    let magnitudes = buffer[..=n / 2].iter().map(|c| c.norm()).collect();
    Ok(Spectrum {
        magnitudes,
        bin_width_hz: rate_hz / n as f64,
        origin,
    })
}

/// Cut `[start_s, start_s + length_s)` out of a signal.
///
/// Boundaries are rounded to the nearest sample; the window may end at most
/// half a sample past the signal end.
pub fn slice_window(signal: &SampledSignal, start_s: f64, length_s: f64) -> Result<SampledSignal> {
    if !(start_s.is_finite() && length_s.is_finite()) || start_s < 0.0 || length_s <= 0.0 {
        return Err(Error::Range(format!(
            "window start {start_s} s / length {length_s} s is not a valid window"
        )));
    }
    let rate = signal.rate_hz();
    let first = (start_s * rate).round() as usize;
    let count = (length_s * rate).round() as usize;
    if count == 0 || first + count > signal.len() {
        return Err(Error::Range(format!(
            "window [{start_s}, {}) s exceeds signal duration {} s",
            start_s + length_s,
            signal.duration_seconds()
        )));
    }
    let shift_ms = (first as f64 * 1000.0 / rate).round() as i64;
    SampledSignal::new(
        signal.samples()[first..first + count].to_vec(),
        rate,
        signal.start_time() + shift_ms,
        signal.kind(),
    )
}

/// Read a single-channel CSV with header `timestamp_ms,value`.
///
/// The sample rate comes from the caller; timestamps must be uniform to within
/// 1% of the sample period.
pub fn read_signal_csv<R: Read>(
    reader: R,
    rate_hz: f64,
    kind: SignalKind,
) -> Result<SampledSignal> {
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(Error::invalid(format!(
            "sample rate must be > 0, got {rate_hz}"
        )));
    }
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "timestamp_ms" || &headers[1] != "value" {
        return Err(Error::Ingestion(format!(
            "expected header `timestamp_ms,value`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (row, record) in csv.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let t: f64 = record[0].parse().map_err(|_| {
            Error::Ingestion(format!("line {line}: bad timestamp `{}`", &record[0]))
        })?;
        let v: f64 = record[1]
            .parse()
            .map_err(|_| Error::Ingestion(format!("line {line}: bad value `{}`", &record[1])))?;
        if !v.is_finite() || !t.is_finite() {
            return Err(Error::Ingestion(format!("line {line}: non-finite entry")));
        }
        times.push(t);
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::Ingestion("signal file has no samples".into()));
    }
    let period = 1000.0 / rate_hz;
    for (i, pair) in times.windows(2).enumerate() {
        let jitter = (pair[1] - pair[0] - period).abs();
        if jitter > 0.01 * period {
            return Err(Error::Ingestion(format!(
                "non-uniform sampling at row {}: step {} ms, expected {period} ms",
                i + 2,
                pair[1] - pair[0]
            )));
        }
    }
    SampledSignal::new(values, rate_hz, times[0].round() as i64, kind)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hamming_small_cases() {
        assert_eq!(hamming_window(1).unwrap(), vec![1.0]);
        let w = hamming_window(3).unwrap();
        assert!((w[0] - 0.08).abs() < 1e-15);
        assert!((w[1] - 1.0).abs() < 1e-15);
        assert!((w[2] - 0.08).abs() < 1e-15);
        let w = hamming_window(64).unwrap();
        assert_eq!(w[10], w[53]);
        assert!(w.iter().all(|&v| (0.08 - 1e-12..=1.0).contains(&v)));
        assert!(hamming_window(0).is_err());
    }

    #[test]
    fn dc_lands_in_bin_zero() {
        let c = 3.5;
        let n = 40;
        let s = dft_magnitude(&vec![c; n], 10.0, 0).unwrap();
        assert!((s.magnitudes[0] - c * n as f64).abs() < 1e-9);
        assert!(s.magnitudes[1..].iter().all(|&m| m < 1e-9 * c * n as f64));
        assert_eq!(s.magnitudes.len(), n / 2 + 1);
        assert!((s.bin_width_hz - 0.25).abs() < 1e-15);
    }

    #[test]
    fn cosine_on_bin_peaks_there() {
        let n = 128;
        let k = 9;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * k as f64 * i as f64 / n as f64).cos())
            .collect();
        let s = dft_magnitude(&x, 1.0, 0).unwrap();
        let argmax = s
            .magnitudes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, k);
    }

    #[test]
    fn dft_rejects_bad_input() {
        assert!(dft_magnitude(&[1.0], 1.0, 0).is_err());
        assert!(dft_magnitude(&[1.0, f64::NAN], 1.0, 0).is_err());
    }

    #[test]
    fn slicing() {
        let sig = SampledSignal::new(
            (0..30_000).map(|i| i as f64).collect(),
            100.0,
            1_000,
            SignalKind::Respiration,
        )
        .unwrap();
        assert_eq!(slice_window(&sig, 0.0, 300.0).unwrap(), sig);
        let w = slice_window(&sig, 60.0, 60.0).unwrap();
        assert_eq!(w.len(), 6000);
        assert_eq!(w.samples()[0], 6000.0);
        assert_eq!(w.start_time(), 61_000);
        assert!(matches!(
            slice_window(&sig, 250.0, 60.0),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn signal_rejects_non_finite() {
        assert!(SampledSignal::ecg(vec![0.0, f64::INFINITY], 250.0).is_err());
        assert!(SampledSignal::ecg(vec![0.0], 0.0).is_err());
    }

    #[test]
    fn csv_ingestion_checks_jitter() {
        let good = "timestamp_ms,value\n1000,0.1\n1004,0.2\n1008,0.3\n";
        let sig = read_signal_csv(good.as_bytes(), 250.0, SignalKind::Ecg).unwrap();
        assert_eq!(sig.samples(), &[0.1, 0.2, 0.3]);
        assert_eq!(sig.start_time(), 1000);

        let jittery = "timestamp_ms,value\n1000,0.1\n1004,0.2\n1009,0.3\n";
        assert!(matches!(
            read_signal_csv(jittery.as_bytes(), 250.0, SignalKind::Ecg),
            Err(Error::Ingestion(_))
        ));
        let wrong_header = "t,v\n0,1\n";
        assert!(read_signal_csv(wrong_header.as_bytes(), 250.0, SignalKind::Ecg).is_err());
    }
}
