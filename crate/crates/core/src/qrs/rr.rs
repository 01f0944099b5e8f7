use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physiologic limits for a normal-to-normal interval, exclusive.
pub const MIN_RR_MS: f64 = 200.0;
pub const MAX_RR_MS: f64 = 3000.0;

/// A stretch of consecutive beats with no rejected interval inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrRun {
    beat_times_ms: Vec<f64>,
    intervals_ms: Vec<f64>,
}

impl RrRun {
    fn from_beats(beat_times_ms: Vec<f64>) -> Self {
        let intervals_ms = beat_times_ms.windows(2).map(|w| w[1] - w[0]).collect();
        Self {
            beat_times_ms,
            intervals_ms,
        }
    }

    pub fn beat_times_ms(&self) -> &[f64] {
        &self.beat_times_ms
    }

    pub fn intervals_ms(&self) -> &[f64] {
        &self.intervals_ms
    }
}

/// Normal-to-normal intervals with absolute beat timestamps (epoch ms).
///
/// Rejecting an out-of-range interval drops the beat pair that bounds it, so
/// the series is stored as runs: inside every run `intervals[i] ==
/// beat_times[i + 1] - beat_times[i]` holds exactly, and a gap separates
/// successive runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RRSeries {
    runs: Vec<RrRun>,
}

impl RRSeries {
    /// Build from beat times, dropping intervals outside `(200, 3000)` ms.
    pub fn from_beat_times(beat_times_ms: &[f64]) -> Self {
        let mut runs = Vec::new();
        let mut current: Vec<f64> = Vec::new();
        for pair in beat_times_ms.windows(2) {
            let interval = pair[1] - pair[0];
            if interval > MIN_RR_MS && interval < MAX_RR_MS {
                if current.is_empty() {
                    current.push(pair[0]);
                }
                current.push(pair[1]);
            } else if !current.is_empty() {
                runs.push(RrRun::from_beats(std::mem::take(&mut current)));
            }
        }
        if current.len() >= 2 {
            runs.push(RrRun::from_beats(current));
        }
        Self { runs }
    }

    /// A single contiguous run starting at `start_ms`; intervals are kept as
    /// given (no physiologic filtering) but must be positive and finite.
    pub fn from_intervals(start_ms: f64, intervals_ms: &[f64]) -> Result<Self> {
        if intervals_ms.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("RR intervals must be positive and finite"));
        }
        if intervals_ms.is_empty() {
            return Ok(Self::default());
        }
        let mut beats = Vec::with_capacity(intervals_ms.len() + 1);
        beats.push(start_ms);
        for v in intervals_ms {
            let last = *beats.last().expect("non-empty");
            beats.push(last + v);
        }
        // Keep the caller's interval values bit-for-bit.
        Ok(Self {
            runs: vec![RrRun {
                beat_times_ms: beats,
                intervals_ms: intervals_ms.to_vec(),
            }],
        })
    }

    pub fn runs(&self) -> &[RrRun] {
        &self.runs
    }

    pub fn len(&self) -> usize {
        self.runs.iter().map(|r| r.intervals_ms.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All intervals in time order.
    pub fn intervals(&self) -> Vec<f64> {
        self.runs
            .iter()
            .flat_map(|r| r.intervals_ms.iter().copied())
            .collect()
    }

    /// `(time of the beat that ends the interval, interval)` in time order.
    pub fn timed_intervals(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.runs.iter().flat_map(|r| {
            r.beat_times_ms[1..]
                .iter()
                .copied()
                .zip(r.intervals_ms.iter().copied())
        })
    }

    pub fn first_beat_ms(&self) -> Option<f64> {
        self.runs.first().map(|r| r.beat_times_ms[0])
    }

    pub fn last_beat_ms(&self) -> Option<f64> {
        self.runs
            .last()
            .and_then(|r| r.beat_times_ms.last().copied())
    }
}

/// RR series from R-peak sample indices.
///
/// Fewer than two peaks gives an empty series rather than an error.
pub fn rr_from_peaks(r_peaks: &[usize], rate_hz: f64, start_time_ms: i64) -> Result<RRSeries> {
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(Error::invalid(format!(
            "sample rate must be > 0, got {rate_hz}"
        )));
    }
    if r_peaks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("R peaks must be strictly increasing"));
    }
    let times: Vec<f64> = r_peaks
        .iter()
        .map(|&p| start_time_ms as f64 + p as f64 * 1000.0 / rate_hz)
        .collect();
    Ok(RRSeries::from_beat_times(&times))
}

/// Inclusive time range in epoch milliseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWindow {
    pub start_ms: f64,
    pub end_ms: f64,
}

/// `60000 / mean(interval)` over intervals whose closing beat falls in the
/// window (the whole series when `window` is `None`).
pub fn mean_heart_rate(rr: &RRSeries, window: Option<TimeWindow>) -> Result<f64> {
    let selected: Vec<f64> = rr
        .timed_intervals()
        .filter(|(t, _)| window.is_none_or(|w| *t >= w.start_ms && *t <= w.end_ms))
        .map(|(_, v)| v)
        .collect();
    if selected.is_empty() {
        return Err(Error::no_data(
            "no RR intervals inside the heart-rate window",
        ));
    }
    Ok(60_000.0 / crate::stats::mean(&selected))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intervals_from_sample_indices() {
        let rr = rr_from_peaks(&[0, 250, 500], 250.0, 0).unwrap();
        assert_eq!(rr.intervals(), vec![1000.0, 1000.0]);
    }

    #[test]
    fn long_gap_is_dropped() {
        // 1000, 5000, 1000 ms
        let rr = rr_from_peaks(&[0, 250, 1500, 1750], 250.0, 0).unwrap();
        assert_eq!(rr.intervals(), vec![1000.0, 1000.0]);
        assert_eq!(rr.runs().len(), 2);
        for run in rr.runs() {
            for (i, v) in run.intervals_ms().iter().enumerate() {
                assert_eq!(*v, run.beat_times_ms()[i + 1] - run.beat_times_ms()[i]);
            }
        }
    }

    #[test]
    fn sixty_one_peaks() {
        let peaks: Vec<usize> = (0..61).map(|i| i * 250).collect();
        let rr = rr_from_peaks(&peaks, 250.0, 1_000_000).unwrap();
        assert_eq!(rr.len(), 60);
        assert!(rr.intervals().iter().all(|&v| v == 1000.0));
        assert_eq!(rr.first_beat_ms(), Some(1_000_000.0));
    }

    #[test]
    fn too_few_peaks_is_empty_not_error() {
        assert!(rr_from_peaks(&[10], 250.0, 0).unwrap().is_empty());
        assert!(rr_from_peaks(&[], 250.0, 0).unwrap().is_empty());
        assert!(rr_from_peaks(&[10, 5], 250.0, 0).is_err());
    }

    #[test]
    fn heart_rate_cases() {
        let hr = |iv: &[f64]| {
            mean_heart_rate(&RRSeries::from_intervals(0.0, iv).unwrap(), None).unwrap()
        };
        assert_eq!(hr(&[1000.0; 5]), 60.0);
        assert_eq!(hr(&[480.0; 5]), 125.0);
        assert_eq!(hr(&[500.0, 1000.0]), 80.0);
        let rr = RRSeries::from_intervals(0.0, &[1000.0; 5]).unwrap();
        let empty = TimeWindow {
            start_ms: 10_000.0,
            end_ms: 20_000.0,
        };
        assert!(mean_heart_rate(&rr, Some(empty)).unwrap_err().is_no_data());
        let last_two = TimeWindow {
            start_ms: 4000.0,
            end_ms: 5000.0,
        };
        assert_eq!(mean_heart_rate(&rr, Some(last_two)).unwrap(), 60.0);
    }
}
