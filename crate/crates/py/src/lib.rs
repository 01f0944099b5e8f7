//! Python bindings for the `edgecare` toolkit.
//!
//! Signals cross the boundary as lists of floats with an explicit sampling
//! rate. Timestamps are epoch milliseconds or ISO 8601 strings.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use edgecare::classify::{
    self, Classifier, FeatureVector, ModelDocument, Value, WeightedIndexModel,
};
use edgecare::ecg::{self, HighPassSpec, ThresholdMode};
use edgecare::measurement::{AcquisitionMode, MeasurementKind, MeasurementRecord};
use edgecare::qrs::{self, BeatLabel};
use edgecare::time::{format_iso, parse_timestamp, TimestampMs};
use edgecare::{hrv, messaging, respiration, rules, signal, synth, SampledSignal};

fn err(e: edgecare::Error) -> PyErr {
    match e {
        edgecare::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for edgecare::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(err)
    }
}

fn timestamp(obj: &Bound<'_, PyAny>) -> PyResult<TimestampMs> {
    if let Ok(ms) = obj.extract::<i64>() {
        return Ok(ms);
    }
    parse_timestamp(&obj.extract::<String>()?).py()
}

fn ecg_signal(samples: Vec<f64>, rate_hz: f64) -> PyResult<SampledSignal> {
    SampledSignal::ecg(samples, rate_hz).py()
}

/// Returns `(samples, r_peaks)` for a clean synthetic ECG.
#[pyfunction]
#[pyo3(signature = (bpm, duration_s, rate_hz = 250.0))]
fn synthetic_ecg(bpm: f64, duration_s: f64, rate_hz: f64) -> PyResult<(Vec<f64>, Vec<usize>)> {
    let s = synth::synthetic_ecg(bpm, duration_s, rate_hz).py()?;
    Ok((s.signal.into_samples(), s.r_peaks))
}

#[pyfunction]
fn add_white_noise(samples: Vec<f64>, snr_db: f64, seed: u64) -> Vec<f64> {
    synth::add_white_noise(&samples, snr_db, seed)
}

/// Returns `(frequencies_hz, magnitudes)` for bins `0..=n/2`.
#[pyfunction]
fn dft_magnitude(samples: Vec<f64>, rate_hz: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let s = signal::dft_magnitude(&samples, rate_hz, 0).py()?;
    let freqs = (0..s.magnitudes.len()).map(|k| s.frequency(k)).collect();
    Ok((freqs, s.magnitudes))
}

#[pyfunction]
#[pyo3(signature = (samples, rate_hz, levels = 4, mode = "hard"))]
fn wavelet_denoise(
    samples: Vec<f64>,
    rate_hz: f64,
    levels: usize,
    mode: &str,
) -> PyResult<Vec<f64>> {
    let mode = match mode {
        "hard" => ThresholdMode::Hard,
        "soft" => ThresholdMode::Soft,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown threshold mode `{other}`"
            )))
        }
    };
    Ok(
        ecg::wavelet_denoise(&ecg_signal(samples, rate_hz)?, levels, mode)
            .py()?
            .into_samples(),
    )
}

/// Zero-phase Butterworth high-pass baseline removal.
#[pyfunction]
#[pyo3(signature = (samples, rate_hz, cutoff_hz = 0.5))]
fn remove_baseline(samples: Vec<f64>, rate_hz: f64, cutoff_hz: f64) -> PyResult<Vec<f64>> {
    let spec = HighPassSpec {
        cutoff_hz,
        ..HighPassSpec::default()
    };
    Ok(
        ecg::remove_baseline_linear(&ecg_signal(samples, rate_hz)?, &spec)
            .py()?
            .into_samples(),
    )
}

/// R-peak sample indices from `pan_tompkins` or `wavelet`.
#[pyfunction]
#[pyo3(signature = (samples, rate_hz, detector = "pan_tompkins"))]
fn detect_qrs(samples: Vec<f64>, rate_hz: f64, detector: &str) -> PyResult<Vec<usize>> {
    let s = ecg_signal(samples, rate_hz)?;
    match detector {
        "pan_tompkins" => qrs::pan_tompkins(&s).py(),
        "wavelet" => Ok(qrs::wavelet_qrs(&s)
            .py()?
            .into_iter()
            .filter(|b| b.label == BeatLabel::Qrs)
            .map(|b| b.r_peak)
            .collect()),
        other => Err(PyValueError::new_err(format!("unknown detector `{other}`"))),
    }
}

/// Breaths per minute, one value per analysis window.
#[pyfunction]
fn respiration_rate(samples: Vec<f64>, rate_hz: f64) -> PyResult<Vec<f64>> {
    respiration::respiration_rate(&SampledSignal::respiration(samples, rate_hz).py()?).py()
}

#[pyclass(name = "RRSeries", module = "edgecare")]
struct PyRRSeries(qrs::RRSeries);

#[pymethods]
impl PyRRSeries {
    #[staticmethod]
    #[pyo3(signature = (intervals_ms, start_ms = 0.0))]
    fn from_intervals(intervals_ms: Vec<f64>, start_ms: f64) -> PyResult<Self> {
        Ok(Self(
            qrs::RRSeries::from_intervals(start_ms, &intervals_ms).py()?,
        ))
    }

    #[staticmethod]
    #[pyo3(signature = (r_peaks, rate_hz, start_ms = 0))]
    fn from_peaks(r_peaks: Vec<usize>, rate_hz: f64, start_ms: i64) -> PyResult<Self> {
        Ok(Self(qrs::rr_from_peaks(&r_peaks, rate_hz, start_ms).py()?))
    }

    fn intervals(&self) -> Vec<f64> {
        self.0.intervals()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn mean_heart_rate(&self) -> PyResult<f64> {
        qrs::mean_heart_rate(&self.0, None).py()
    }

    /// Dict with `sdnn_ms`, `sdann_ms`, `sdnnidx_ms`, `pnn50_pct`, `rmssd_ms`;
    /// segment statistics are `None` for recordings under ten minutes.
    fn time_features(&self) -> PyResult<BTreeMap<&'static str, Option<f64>>> {
        let f = hrv::time_features(&self.0).py()?;
        Ok(BTreeMap::from([
            ("sdnn_ms", Some(f.sdnn_ms)),
            ("sdann_ms", f.sdann_ms),
            ("sdnnidx_ms", f.sdnnidx_ms),
            ("pnn50_pct", Some(f.pnn50_pct)),
            ("rmssd_ms", Some(f.rmssd_ms)),
        ]))
    }

    /// Returns `(lf_power, hf_power)` in ms².
    fn band_powers(&self) -> PyResult<(f64, f64)> {
        let f = hrv::band_powers(&self.0).py()?;
        Ok((f.lf_power, f.hf_power))
    }
}

#[pyclass(
    name = "Measurement",
    module = "edgecare",
    get_all,
    skip_from_py_object
)]
#[derive(Clone)]
struct PyMeasurement {
    patient_id: String,
    kind: String,
    value: f64,
    timestamp: TimestampMs,
    mode: String,
}

#[pymethods]
impl PyMeasurement {
    #[new]
    #[pyo3(signature = (patient_id, kind, value, timestamp, mode = "SILENT"))]
    fn new(
        patient_id: String,
        kind: &str,
        value: f64,
        timestamp: &Bound<'_, PyAny>,
        mode: &str,
    ) -> PyResult<Self> {
        let r = MeasurementRecord::new(
            patient_id,
            kind.parse::<MeasurementKind>().py()?,
            value,
            self::timestamp(timestamp)?,
            mode.parse::<AcquisitionMode>().py()?,
        );
        Ok(Self::from(&r))
    }

    fn __repr__(&self) -> String {
        format!(
            "Measurement({:?}, {:?}, {}, {:?}, {:?})",
            self.patient_id,
            self.kind,
            self.value,
            format_iso(self.timestamp),
            self.mode
        )
    }
}

impl From<&MeasurementRecord> for PyMeasurement {
    fn from(r: &MeasurementRecord) -> Self {
        Self {
            patient_id: r.patient_id.clone(),
            kind: r.kind.to_string(),
            value: r.value,
            timestamp: r.timestamp,
            mode: r.mode.as_str().to_string(),
        }
    }
}

impl PyMeasurement {
    fn record(&self) -> PyResult<MeasurementRecord> {
        Ok(MeasurementRecord::new(
            self.patient_id.clone(),
            self.kind.parse::<MeasurementKind>().py()?,
            self.value,
            self.timestamp,
            self.mode.parse::<AcquisitionMode>().py()?,
        ))
    }
}

#[pyclass(name = "Alert", module = "edgecare", get_all)]
struct PyAlert {
    rule_id: String,
    patient_id: String,
    severity: String,
    fired_at: TimestampMs,
    message: String,
    /// `(kind, timestamp_ms)` pairs.
    evidence: Vec<(String, TimestampMs)>,
}

#[pymethods]
impl PyAlert {
    fn __repr__(&self) -> String {
        format!(
            "Alert({:?}, {}, {:?})",
            self.rule_id, self.severity, self.message
        )
    }
}

#[pyclass(name = "RuleSet", module = "edgecare")]
struct PyRuleSet(rules::RuleSet);

#[pymethods]
impl PyRuleSet {
    #[new]
    fn new(xml: &str) -> PyResult<Self> {
        Ok(Self(rules::parse_rules(xml).py()?))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn rule_ids(&self) -> Vec<String> {
        self.0.rules().iter().map(|r| r.id.clone()).collect()
    }

    /// Alerts for `patient_id` at `now`, most severe first.
    fn evaluate(
        &self,
        history: Vec<PyRef<'_, PyMeasurement>>,
        patient_id: &str,
        now: &Bound<'_, PyAny>,
    ) -> PyResult<Vec<PyAlert>> {
        let records = history
            .iter()
            .map(|m| m.record())
            .collect::<PyResult<Vec<_>>>()?;
        Ok(
            rules::evaluate(&self.0, &records, patient_id, timestamp(now)?)
                .into_iter()
                .map(|a| PyAlert {
                    rule_id: a.rule_id,
                    patient_id: a.patient_id,
                    severity: a.severity.as_str().to_string(),
                    fired_at: a.fired_at,
                    message: a.message,
                    evidence: a
                        .evidence
                        .into_iter()
                        .map(|e| (e.kind.to_string(), e.timestamp))
                        .collect(),
                })
                .collect(),
        )
    }

    /// The evaluation report as one JSON line.
    fn report(
        &self,
        history: Vec<PyRef<'_, PyMeasurement>>,
        patient_id: &str,
        now: &Bound<'_, PyAny>,
    ) -> PyResult<String> {
        let records = history
            .iter()
            .map(|m| m.record())
            .collect::<PyResult<Vec<_>>>()?;
        rules::evaluate_report(&self.0, &records, patient_id, timestamp(now)?)
            .to_json_line()
            .py()
    }
}

#[pyclass(name = "Model", module = "edgecare")]
struct PyModel(ModelDocument);

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self(ModelDocument::from_json(text).py()?))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PyOSError::new_err(e.to_string()))?;
        Self::from_json(&text)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().py()
    }

    #[getter]
    fn algorithm(&self) -> &'static str {
        self.0.model.algorithm()
    }

    fn summary(&self) -> String {
        self.0.model.summary()
    }

    fn attributes(&self) -> Vec<String> {
        self.0.model.schema().names().map(str::to_string).collect()
    }

    /// `features` maps attribute names to floats or category strings; absent
    /// names are missing. Returns `(label, [p_stable, p_light, p_worsening])`.
    fn predict(
        &self,
        features: BTreeMap<String, Bound<'_, PyAny>>,
    ) -> PyResult<(String, Vec<f64>)> {
        let schema = self.0.model.schema();
        let mut x = FeatureVector::missing(schema);
        for (name, v) in features {
            let value = if v.is_none() {
                None
            } else if let Ok(s) = v.extract::<String>() {
                Some(Value::Cat(s))
            } else {
                Some(Value::Num(v.extract::<f64>()?))
            };
            x.set(schema, &name, value).py()?;
        }
        let (label, dist) = self.0.model.predict(&x).py()?;
        Ok((label.as_str().to_string(), dist.to_vec()))
    }
}

/// Returns `(index, triggered)`; `None` scores are missing.
#[pyfunction]
fn weighted_index(
    weights: BTreeMap<String, f64>,
    scores: BTreeMap<String, Option<f64>>,
    threshold: f64,
) -> PyResult<(f64, bool)> {
    let model = WeightedIndexModel::new(weights, threshold).py()?;
    let out = classify::weighted_index(&model, &scores).py()?;
    Ok((out.index, out.triggered))
}

/// Returns `(mae, rmse, rae_pct)`; RAE is `None` when the targets are constant.
#[pyfunction]
fn regression_metrics(actual: Vec<f64>, predicted: Vec<f64>) -> PyResult<(f64, f64, Option<f64>)> {
    let m = classify::regression_metrics(&actual, &predicted).py()?;
    Ok((m.mae, m.rmse, m.rae_pct))
}

type ParsedMessage = (String, String, Vec<String>, usize, Vec<PyMeasurement>);

/// Validates an outbound message and returns
/// `(patient_id, urgency, alert_rule_ids, first_seq, measurements)`.
#[pyfunction]
fn parse_message(xml: &str) -> PyResult<ParsedMessage> {
    let m = messaging::parse_message_xml(xml).py()?;
    Ok((
        m.patient_id,
        m.urgency.as_str().to_string(),
        m.alerts.into_iter().map(|a| a.rule_id).collect(),
        m.first_seq,
        m.measurements.iter().map(PyMeasurement::from).collect(),
    ))
}

#[pymodule]
#[pyo3(name = "edgecare")]
fn edgecare_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(synthetic_ecg, m)?)?;
    m.add_function(wrap_pyfunction!(add_white_noise, m)?)?;
    m.add_function(wrap_pyfunction!(dft_magnitude, m)?)?;
    m.add_function(wrap_pyfunction!(wavelet_denoise, m)?)?;
    m.add_function(wrap_pyfunction!(remove_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(detect_qrs, m)?)?;
    m.add_function(wrap_pyfunction!(respiration_rate, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_index, m)?)?;
    m.add_function(wrap_pyfunction!(regression_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(parse_message, m)?)?;
    m.add_class::<PyRRSeries>()?;
    m.add_class::<PyMeasurement>()?;
    m.add_class::<PyAlert>()?;
    m.add_class::<PyRuleSet>()?;
    m.add_class::<PyModel>()?;
    Ok(())
}
