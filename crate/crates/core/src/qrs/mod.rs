//! QRS detection (Pan-Tompkins and wavelet spikes) and RR-interval series.

pub mod pan_tompkins;
pub mod rr;
pub mod wavelet;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
pub use pan_tompkins::{pan_tompkins, pan_tompkins_with, PanTompkinsParams};
pub use rr::{mean_heart_rate, rr_from_peaks, RRSeries, TimeWindow};
pub use wavelet::{wavelet_qrs, wavelet_qrs_with, WaveletQrsParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BeatLabel {
    Qrs,
    Noise,
    Artifact,
}

impl BeatLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BeatLabel::Qrs => "QRS",
            BeatLabel::Noise => "NOISE",
            BeatLabel::Artifact => "ARTIFACT",
        }
    }
}

/// One spike found by the wavelet detector, as sample indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeatAnnotation {
    pub r_peak: usize,
    /// QRS onset.
    pub pq_junction: usize,
    /// QRS offset.
    pub j_point: usize,
    pub label: BeatLabel,
}

/// CSV `beat_index,r_peak_sample,onset_sample,offset_sample,label`.
pub fn write_annotations_csv<W: Write>(writer: W, beats: &[BeatAnnotation]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record([
        "beat_index",
        "r_peak_sample",
        "onset_sample",
        "offset_sample",
        "label",
    ])?;
    for (i, b) in beats.iter().enumerate() {
        csv.write_record([
            i.to_string(),
            b.r_peak.to_string(),
            b.pq_junction.to_string(),
            b.j_point.to_string(),
            b.label.as_str().to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// Fraction of beats on which two detectors disagree, matching peaks within
/// `tolerance_samples`. Zero when both lists are empty.
pub fn detector_disagreement(a: &[usize], b: &[usize], tolerance_samples: usize) -> f64 {
    let matched = count_matches(a, b, tolerance_samples);
    let total = a.len().max(b.len());
    if total == 0 {
        0.0
    } else {
        1.0 - matched as f64 / total as f64
    }
}

/// Greedy one-to-one matching of two sorted peak lists.
pub fn count_matches(reference: &[usize], detected: &[usize], tolerance_samples: usize) -> usize {
    let (mut i, mut j, mut matched) = (0, 0, 0);
    while i < reference.len() && j < detected.len() {
        let (r, d) = (reference[i], detected[j]);
        if r.abs_diff(d) <= tolerance_samples {
            matched += 1;
            i += 1;
            j += 1;
        } else if d < r {
            j += 1;
        } else {
            i += 1;
        }
    }
    matched
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annotation_csv_layout() {
        let beats = [BeatAnnotation {
            r_peak: 10,
            pq_junction: 5,
            j_point: 20,
            label: BeatLabel::Qrs,
        }];
        let mut out = Vec::new();
        write_annotations_csv(&mut out, &beats).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "beat_index,r_peak_sample,onset_sample,offset_sample,label\n0,10,5,20,QRS\n"
        );
    }

    #[test]
    fn matching() {
        assert_eq!(count_matches(&[100, 200, 300], &[102, 290, 500], 5), 1);
        assert_eq!(detector_disagreement(&[], &[], 5), 0.0);
        assert!((detector_disagreement(&[100, 200], &[100], 5) - 0.5).abs() < 1e-12);
    }
}
