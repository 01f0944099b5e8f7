//! Butterworth IIR filters as cascaded second-order sections, with causal and
//! forward-backward (zero-phase) application.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// One second-order section, `a[0]` normalised to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn normalised(b: [f64; 3], a: [f64; 3]) -> Self {
        let a0 = a[0];
        Self {
            b: [b[0] / a0, b[1] / a0, b[2] / a0],
            a: [1.0, a[1] / a0, a[2] / a0],
        }
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }

    /// State that makes a constant input `level` produce a constant output.
    fn steady_state(&self, level: f64) -> [f64; 2] {
        let g = self.dc_gain();
        let s2 = (self.b[2] - self.a[2] * g) * level;
        let s1 = (self.b[1] - self.a[1] * g) * level + s2;
        [s1, s2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Band {
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    sections: Vec<Biquad>,
}

impl SosFilter {
    pub fn butterworth_highpass(order: usize, cutoff_hz: f64, rate_hz: f64) -> Result<Self> {
        Self::butterworth(order, cutoff_hz, rate_hz, Band::High)
    }

    pub fn butterworth_lowpass(order: usize, cutoff_hz: f64, rate_hz: f64) -> Result<Self> {
        Self::butterworth(order, cutoff_hz, rate_hz, Band::Low)
    }

    fn butterworth(order: usize, cutoff_hz: f64, rate_hz: f64, band: Band) -> Result<Self> {
        if !(1..=8).contains(&order) {
            return Err(Error::invalid(format!(
                "filter order must be in 1..=8, got {order}"
            )));
        }
        if !(cutoff_hz > 0.0 && cutoff_hz < rate_hz / 2.0) {
            return Err(Error::invalid(format!(
                "cutoff {cutoff_hz} Hz must lie strictly between 0 and Nyquist ({} Hz)",
                rate_hz / 2.0
            )));
        }
        // Bilinear transform with prewarping: W = tan(pi fc / fs).
        let w = (PI * cutoff_hz / rate_hz).tan();
        let mut sections = Vec::with_capacity(order.div_ceil(2));
        for k in 0..order / 2 {
            let theta = PI * (2 * k + 1) as f64 / (2 * order) as f64;
            let two_zeta = 2.0 * theta.sin();
            let a = [
                1.0 + two_zeta * w + w * w,
                2.0 * w * w - 2.0,
                1.0 - two_zeta * w + w * w,
            ];
            let b = match band {
                Band::High => [1.0, -2.0, 1.0],
                Band::Low => [w * w, 2.0 * w * w, w * w],
            };
            sections.push(Biquad::normalised(b, a));
        }
        if order % 2 == 1 {
            let a = [1.0 + w, w - 1.0, 0.0];
            let b = match band {
                Band::High => [1.0, -1.0, 0.0],
                Band::Low => [w, w, 0.0],
            };
            sections.push(Biquad::normalised(b, a));
        }
        Ok(Self { sections })
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// `|H(e^{j 2 pi f / fs})|` evaluated from the coefficients.
    pub fn magnitude_at(&self, freq_hz: f64, rate_hz: f64) -> f64 {
        let omega = 2.0 * PI * freq_hz / rate_hz;
        let (c1, s1) = (omega.cos(), -omega.sin());
        let (c2, s2) = ((2.0 * omega).cos(), -(2.0 * omega).sin());
        self.sections
            .iter()
            .map(|sec| {
                let nr = sec.b[0] + sec.b[1] * c1 + sec.b[2] * c2;
                let ni = sec.b[1] * s1 + sec.b[2] * s2;
                let dr = sec.a[0] + sec.a[1] * c1 + sec.a[2] * c2;
                let di = sec.a[1] * s1 + sec.a[2] * s2;
                ((nr * nr + ni * ni) / (dr * dr + di * di)).sqrt()
            })
            .product()
    }

    /// Causal filtering from a zero initial state.
    pub fn filter(&self, input: &[f64]) -> Vec<f64> {
        let zero = vec![[0.0; 2]; self.sections.len()];
        self.run(input, zero)
    }

    fn run(&self, input: &[f64], mut state: Vec<[f64; 2]>) -> Vec<f64> {
        let mut out = input.to_vec();
        for (sec, st) in self.sections.iter().zip(state.iter_mut()) {
            for v in out.iter_mut() {
                let x = *v;
                let y = sec.b[0] * x + st[0];
                st[0] = sec.b[1] * x - sec.a[1] * y + st[1];
                st[1] = sec.b[2] * x - sec.a[2] * y;
                *v = y;
            }
        }
        out
    }

    fn steady_state(&self, level: f64) -> Vec<[f64; 2]> {
        let mut level = level;
        self.sections
            .iter()
            .map(|sec| {
                let st = sec.steady_state(level);
                level *= sec.dc_gain();
                st
            })
            .collect()
    }

    /// Forward-backward filtering with odd-symmetric edge extension of
    /// `padlen` samples and steady-state initial conditions.
    pub fn filtfilt(&self, input: &[f64], padlen: usize) -> Vec<f64> {
        let n = input.len();
        if n < 2 {
            return input.to_vec();
        }
        let pad = padlen.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        let (first, last) = (input[0], input[n - 1]);
        ext.extend((0..pad).map(|i| 2.0 * first - input[pad - i]));
        ext.extend_from_slice(input);
        ext.extend((0..pad).map(|i| 2.0 * last - input[n - 2 - i]));

        let forward = self.run(&ext, self.steady_state(ext[0]));
        let mut reversed: Vec<f64> = forward.into_iter().rev().collect();
        let start = reversed[0];
        reversed = self.run(&reversed, self.steady_state(start));
        reversed.reverse();
        reversed[pad..pad + n].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn analytic_highpass(f: f64, fc: f64, order: i32, fs: f64) -> f64 {
        let ratio = (PI * fc / fs).tan() / (PI * f / fs).tan();
        1.0 / (1.0 + ratio.powi(2 * order)).sqrt()
    }

    #[test]
    fn highpass_matches_butterworth_response() {
        for order in 1..=6 {
            let filt = SosFilter::butterworth_highpass(order, 0.5, 250.0).unwrap();
            for f in [0.05, 0.1, 0.5, 1.0, 10.0, 60.0] {
                let got = filt.magnitude_at(f, 250.0);
                let want = analytic_highpass(f, 0.5, order as i32, 250.0);
                assert!(
                    (got - want).abs() < 1e-9,
                    "order {order} f {f}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn lowpass_has_unit_dc_and_half_power_at_cutoff() {
        let filt = SosFilter::butterworth_lowpass(4, 15.0, 250.0).unwrap();
        assert!((filt.magnitude_at(0.0, 250.0) - 1.0).abs() < 1e-12);
        assert!((filt.magnitude_at(15.0, 250.0) - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_cutoff() {
        assert!(SosFilter::butterworth_highpass(2, 125.0, 250.0).is_err());
        assert!(SosFilter::butterworth_highpass(2, 0.0, 250.0).is_err());
        assert!(SosFilter::butterworth_highpass(0, 1.0, 250.0).is_err());
    }

    #[test]
    fn filtfilt_of_constant_through_highpass_is_zero() {
        let filt = SosFilter::butterworth_highpass(2, 0.5, 250.0).unwrap();
        let out = filt.filtfilt(&vec![1.0; 2000], 500);
        assert!(out.iter().all(|v| v.abs() < 1e-9));
    }
}
