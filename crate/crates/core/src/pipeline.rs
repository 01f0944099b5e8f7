//! One pass of the edge pipeline for a set of patients: signal features,
//! store ingestion, rule and index evaluation, optional classification, and
//! the transmission decision.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{
    weighted_index, AttrKind, ClassLabel, Classifier, ClassifierModel, Distribution, FeatureVector,
    IndexOutcome, Schema, Value, WeightedIndexModel,
};
use crate::config::{Config, DetectorChoice};
use crate::ecg::{
    dedup_knots, remove_baseline_linear, remove_baseline_poly, select_pq_knots, wavelet_denoise,
    BaselineMethod,
};
use crate::error::{Error, Result};
use crate::hrv::{band_powers, time_features};
use crate::measurement::{MeasurementKind, MeasurementRecord};
use crate::messaging::{
    prepare_message, Decision, IngestReport, MeasurementStore, OutboundMessage, Schedule, Urgency,
};
use crate::qrs::{mean_heart_rate, pan_tompkins_with, rr_from_peaks, wavelet_qrs_with, TimeWindow};
use crate::respiration::volume_features_with;
use crate::rules::{evaluate_report, Alert, EvaluationReport, EvidenceRef, RuleSet, Severity};
use crate::signal::SampledSignal;
use crate::stats::median;
use crate::time::TimestampMs;

/// Rule id given to alerts raised by the questionnaire index.
pub const INDEX_RULE_ID: &str = "questionnaire-index";

#[derive(Debug, Clone)]
pub struct PatientInput {
    pub patient_id: String,
    pub ecg: Option<SampledSignal>,
    pub respiration: Option<SampledSignal>,
    pub records: Vec<MeasurementRecord>,
}

/// Values measured from the signals, as store records stamped with the end
/// of the recording they came from.
#[derive(Debug, Clone, Default)]
pub struct SignalFeatures {
    pub records: Vec<MeasurementRecord>,
    pub beats: usize,
    /// Features that could not be computed, with the reason.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: ClassLabel,
    pub distribution: Distribution,
}

#[derive(Debug, Clone)]
pub struct PatientRun {
    pub patient_id: String,
    pub report: EvaluationReport,
    pub features: FeatureVector,
    pub index: Option<IndexOutcome>,
    pub classification: Option<Classification>,
    pub decision: Decision,
    pub message: Option<OutboundMessage>,
    pub ingest: IngestReport,
    pub notes: Vec<String>,
}

impl PatientRun {
    pub fn has_alarm(&self) -> bool {
        self.report
            .alerts
            .iter()
            .any(|a| a.severity == Severity::Alarm)
    }
}

/// The store kind each attribute of the feature vector is read from.
pub fn attribute_kind(name: &str) -> MeasurementKind {
    match name {
        "mean_hr_bpm" => MeasurementKind::HeartRate,
        "respiration_rate_bpm" => MeasurementKind::RespirationRate,
        "body_weight_kg" => MeasurementKind::BodyWeight,
        "glucose_mg_dl" => MeasurementKind::Glucose,
        q if q.len() == 3 && q.starts_with('q') && q[1..].bytes().all(|b| b.is_ascii_digit()) => {
            MeasurementKind::QuestionnaireItem(q.to_string())
        }
        other => MeasurementKind::Feature(other.to_string()),
    }
}

fn signal_end(s: &SampledSignal) -> TimestampMs {
    s.start_time() + (s.len() as f64 * 1000.0 / s.rate_hz()).round() as i64
}

fn keep_or_note<T>(r: Result<T>, what: &str, notes: &mut Vec<String>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_no_data() => {
            notes.push(format!("{what}: {e}"));
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn detect(signal: &SampledSignal, cfg: &Config) -> Result<Vec<usize>> {
    match cfg.ecg.detector {
        DetectorChoice::PanTompkins => pan_tompkins_with(signal, &cfg.ecg.pan_tompkins),
        DetectorChoice::Wavelet => Ok(wavelet_qrs_with(signal, &cfg.ecg.wavelet_qrs)?
            .iter()
            .map(|b| b.r_peak)
            .collect()),
    }
}

/// Baseline removal, wavelet denoising, QRS detection, HRV and heart rate.
fn ecg_features(
    patient: &str,
    ecg: &SampledSignal,
    cfg: &Config,
    out: &mut SignalFeatures,
) -> Result<()> {
    let hp = remove_baseline_linear(ecg, &cfg.ecg.highpass)?;
    let base = match cfg.ecg.baseline {
        BaselineMethod::Linear => hp,
        method => {
            let knots = dedup_knots(select_pq_knots(
                ecg,
                &detect(&hp, cfg)?,
                &cfg.ecg.pq_window,
            )?);
            if knots.len() >= 2 {
                remove_baseline_poly(ecg, &knots)?
            } else if method == BaselineMethod::Poly {
                return Err(Error::no_data(
                    "spline baseline found fewer than 2 PQ knots",
                ));
            } else {
                hp
            }
        }
    };
    let clean = wavelet_denoise(&base, cfg.ecg.wavelet_levels, cfg.ecg.threshold_mode)?;
    let peaks = detect(&clean, cfg)?;
    out.beats = peaks.len();
    let rr = rr_from_peaks(&peaks, ecg.rate_hz(), ecg.start_time())?;
    let end = signal_end(ecg);
    let mut values: Vec<(MeasurementKind, f64)> = Vec::new();
    let feature = |n: &str| MeasurementKind::Feature(n.to_string());
    if let Some(t) = keep_or_note(time_features(&rr), "HRV time features", &mut out.notes)? {
        values.push((feature("sdnn_ms"), t.sdnn_ms));
        values.extend(t.sdann_ms.map(|v| (feature("sdann_ms"), v)));
        values.extend(t.sdnnidx_ms.map(|v| (feature("sdnnidx_ms"), v)));
        values.push((feature("pnn50_pct"), t.pnn50_pct));
        values.push((feature("rmssd_ms"), t.rmssd_ms));
    }
    if let Some(f) = keep_or_note(band_powers(&rr), "HRV band powers", &mut out.notes)? {
        values.push((feature("lf_power_ms2"), f.lf_power));
        values.push((feature("hf_power_ms2"), f.hf_power));
    }
    if let Some(last) = rr.last_beat_ms() {
        let window = TimeWindow {
            start_ms: last - cfg.ecg.hr_window_s * 1000.0,
            end_ms: last,
        };
        if let Some(hr) = keep_or_note(
            mean_heart_rate(&rr, Some(window)),
            "heart rate",
            &mut out.notes,
        )? {
            values.push((MeasurementKind::HeartRate, hr));
        }
    } else {
        out.notes
            .push("heart rate: fewer than 2 beats detected".into());
    }
    out.records.extend(
        values
            .into_iter()
            .map(|(k, v)| MeasurementRecord::silent(patient, k, v, end)),
    );
    Ok(())
}

fn respiration_features(
    patient: &str,
    resp: &SampledSignal,
    cfg: &Config,
    out: &mut SignalFeatures,
) -> Result<()> {
    let r = &cfg.respiration;
    let found = volume_features_with(
        resp,
        r.calibration_units_per_litre,
        r.residual_volume_l,
        &r.stft,
    );
    let Some(f) = keep_or_note(found, "respiration features", &mut out.notes)? else {
        return Ok(());
    };
    let end = signal_end(resp);
    let mut push = |k: MeasurementKind, v: f64| {
        out.records
            .push(MeasurementRecord::silent(patient, k, v, end))
    };
    if f.rate_bpm.is_empty() {
        out.notes
            .push("respiration rate: recording shorter than one analysis window".into());
    } else {
        push(MeasurementKind::RespirationRate, median(&f.rate_bpm));
    }
    push(
        MeasurementKind::Feature("tidal_volume_l".into()),
        f.tidal_volume,
    );
    push(
        MeasurementKind::Feature("vital_capacity_l".into()),
        f.vital_capacity,
    );
    Ok(())
}

/// Signal processing for one patient. Pure; safe to run in parallel.
pub fn extract_signal_features(input: &PatientInput, cfg: &Config) -> Result<SignalFeatures> {
    let mut out = SignalFeatures::default();
    if let Some(ecg) = &input.ecg {
        ecg_features(&input.patient_id, ecg, cfg, &mut out)?;
    }
    if let Some(resp) = &input.respiration {
        respiration_features(&input.patient_id, resp, cfg, &mut out)?;
    }
    Ok(out)
}

pub struct Pipeline {
    pub config: Config,
    pub rules: RuleSet,
    pub schema: Schema,
    pub model: Option<ClassifierModel>,
    index: WeightedIndexModel,
    schedule: Schedule,
}

impl Pipeline {
    /// `rules` is narrowed to the configured disease. A model must have been
    /// trained on the standard 41-attribute schema.
    pub fn new(config: Config, rules: RuleSet, model: Option<ClassifierModel>) -> Result<Pipeline> {
        config.validate()?;
        let schema = Schema::chronic().clone();
        if let Some(m) = &model {
            if m.schema().hash() != schema.hash() {
                return Err(Error::Schema(
                    "model was not trained on the standard attribute schema".into(),
                ));
            }
        }
        let rules = match config.disease {
            Some(d) => rules.for_disease(d),
            None => rules,
        };
        Ok(Pipeline {
            index: config.index.model()?,
            schedule: config.schedule()?,
            config,
            rules,
            schema,
            model,
        })
    }

    /// Latest value at or before `now` of every attribute, from the store.
    pub fn feature_vector(
        &self,
        history: &[MeasurementRecord],
        patient: &str,
        now: TimestampMs,
    ) -> Result<FeatureVector> {
        let mut latest: BTreeMap<&MeasurementKind, &MeasurementRecord> = BTreeMap::new();
        for r in history
            .iter()
            .filter(|r| r.patient_id == patient && r.timestamp <= now)
        {
            let slot = latest.entry(&r.kind).or_insert(r);
            if r.timestamp >= slot.timestamp {
                *slot = r;
            }
        }
        let mut fv = FeatureVector::missing(&self.schema);
        for a in self.schema.attributes() {
            if let Some(r) = latest.get(&attribute_kind(&a.name)) {
                let v = match a.kind {
                    AttrKind::Numeric => Value::Num(r.value),
                    AttrKind::Categorical => Value::Cat(r.value.to_string()),
                };
                fv.set(&self.schema, &a.name, Some(v))?;
            }
        }
        Ok(fv)
    }

    /// Questionnaire index over the latest answers; a light alert when it
    /// crosses the threshold.
    fn index_alert(
        &self,
        history: &[MeasurementRecord],
        patient: &str,
        now: TimestampMs,
    ) -> Result<(Option<IndexOutcome>, Option<Alert>)> {
        let mut scores = BTreeMap::new();
        let mut evidence = Vec::new();
        for name in self.index.weights().keys() {
            let kind = attribute_kind(name);
            let last = history
                .iter()
                .filter(|r| r.patient_id == patient && r.kind == kind && r.timestamp <= now)
                .max_by_key(|r| r.timestamp);
            if let Some(r) = last {
                let max = self.config.index.answer_max;
                if !(0.0..=max).contains(&r.value) {
                    return Err(Error::Range(format!(
                        "{} answer {} outside 0..={max}",
                        r.kind, r.value
                    )));
                }
                scores.insert(name.clone(), Some(r.value / max));
                evidence.push(EvidenceRef {
                    kind: r.kind.clone(),
                    timestamp: r.timestamp,
                });
            }
        }
        let outcome = match weighted_index(&self.index, &scores) {
            Ok(o) => o,
            Err(e) if e.is_no_data() => return Ok((None, None)),
            Err(e) => return Err(e),
        };
        let alert = outcome.triggered.then(|| Alert {
            rule_id: INDEX_RULE_ID.into(),
            patient_id: patient.into(),
            severity: Severity::LightAlert,
            fired_at: now,
            message: format!(
                "Questionnaire index {:.2} above {:.2}",
                outcome.index,
                self.index.threshold()
            ),
            evidence: {
                evidence.sort();
                evidence
            },
        });
        Ok((Some(outcome), alert))
    }

    /// Ingests, evaluates and decides for one patient, persisting the
    /// transmit state when a message goes out or alerts are held.
    pub fn run_patient(
        &self,
        store: &mut MeasurementStore,
        input: &PatientInput,
        signal: SignalFeatures,
        now: TimestampMs,
    ) -> Result<PatientRun> {
        let patient = input.patient_id.as_str();
        if let Some(r) = input.records.iter().find(|r| r.patient_id != patient) {
            return Err(Error::Ingestion(format!(
                "measurement for patient `{}` in the input of `{patient}`",
                r.patient_id
            )));
        }
        let mut records = input.records.clone();
        records.extend(signal.records);
        let ingest = store.ingest(records)?;
        let mut notes = signal.notes;
        notes.extend(ingest.rejected.iter().map(|r| {
            format!(
                "rejected {} at {}: {}",
                r.record.kind, r.record.timestamp, r.reason
            )
        }));
        let history = store.records(patient);
        let mut report = evaluate_report(&self.rules, history, patient, now);
        let (index, index_alert) = self.index_alert(history, patient, now)?;
        if let Some(a) = index_alert {
            report.alerts.push(a);
            report
                .alerts
                .sort_by(|a, b| (a.severity, &a.rule_id).cmp(&(b.severity, &b.rule_id)));
        }
        let features = self.feature_vector(history, patient, now)?;
        let classification = match &self.model {
            Some(m) => {
                let (label, distribution) = m.predict(&features)?;
                Some(Classification {
                    label,
                    distribution,
                })
            }
            None => None,
        };
        let snapshot: Vec<(String, Value)> = self
            .schema
            .names()
            .zip(features.values())
            .filter_map(|(n, v)| v.as_ref().map(|v| (n.to_string(), v.clone())))
            .collect();
        let state = store.transmit_state(patient)?;
        let (message, next) = prepare_message(
            store,
            &state,
            patient,
            &report.alerts,
            snapshot,
            &self.schedule,
            now,
        );
        store.save_transmit_state(patient, &next)?;
        let decision = match &message {
            Some(m) => Decision::Send(m.urgency),
            None => Decision::Hold,
        };
        Ok(PatientRun {
            patient_id: patient.to_string(),
            report,
            features,
            index,
            classification,
            decision,
            message,
            ingest,
            notes,
        })
    }

    /// Signal work runs in parallel on the current rayon pool; the store
    /// steps run one patient at a time in patient-id order.
    pub fn run(
        &self,
        store: &mut MeasurementStore,
        mut inputs: Vec<PatientInput>,
        now: TimestampMs,
    ) -> Result<Vec<PatientRun>> {
        inputs.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
        if let Some(w) = inputs
            .windows(2)
            .find(|w| w[0].patient_id == w[1].patient_id)
        {
            return Err(Error::invalid(format!(
                "patient `{}` listed twice",
                w[0].patient_id
            )));
        }
        let signals: Vec<Result<SignalFeatures>> = inputs
            .par_iter()
            .map(|i| {
                extract_signal_features(i, &self.config)
                    .map_err(|e| Error::invalid(format!("patient `{}`: {e}", i.patient_id)))
            })
            .collect();
        let mut runs = Vec::with_capacity(inputs.len());
        for (input, signal) in inputs.iter().zip(signals) {
            runs.push(self.run_patient(store, input, signal?, now)?);
        }
        Ok(runs)
    }
}

impl Decision {
    pub fn as_str(&self) -> &'static str {
        match self {
            Decision::Send(Urgency::Immediate) => "IMMEDIATE",
            Decision::Send(Urgency::Scheduled) => "SCHEDULED",
            Decision::Hold => "HOLD",
        }
    }
}
