//! Discrete timestamped measurements: vitals, questionnaire answers and
//! derived signal features.

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::time::{parse_timestamp, TimestampMs};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MeasurementKind {
    HeartRate,
    BodyWeight,
    BodyTemperature,
    BloodPressureSys,
    BloodPressureDia,
    Glucose,
    Spo2,
    RespirationRate,
    /// Coded questionnaire answer, e.g. `QUESTIONNAIRE_ITEM:Q07`.
    QuestionnaireItem(String),
    /// Any named derived feature, e.g. `FEATURE:sdnn_ms`.
    Feature(String),
}

const FIXED: [(&str, MeasurementKind); 8] = [
    ("HEART_RATE", MeasurementKind::HeartRate),
    ("BODY_WEIGHT", MeasurementKind::BodyWeight),
    ("BODY_TEMPERATURE", MeasurementKind::BodyTemperature),
    ("BLOOD_PRESSURE_SYS", MeasurementKind::BloodPressureSys),
    ("BLOOD_PRESSURE_DIA", MeasurementKind::BloodPressureDia),
    ("GLUCOSE", MeasurementKind::Glucose),
    ("SPO2", MeasurementKind::Spo2),
    ("RESPIRATION_RATE", MeasurementKind::RespirationRate),
];

impl MeasurementKind {
    pub fn unit(&self) -> &'static str {
        match self {
            MeasurementKind::HeartRate | MeasurementKind::RespirationRate => "bpm",
            MeasurementKind::BodyWeight => "kg",
            MeasurementKind::BodyTemperature => "°C",
            MeasurementKind::BloodPressureSys | MeasurementKind::BloodPressureDia => "mmHg",
            MeasurementKind::Glucose => "mg/dL",
            MeasurementKind::Spo2 => "%",
            MeasurementKind::QuestionnaireItem(_) | MeasurementKind::Feature(_) => "",
        }
    }
}

impl fmt::Display for MeasurementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasurementKind::QuestionnaireItem(code) => write!(f, "QUESTIONNAIRE_ITEM:{code}"),
            MeasurementKind::Feature(name) => write!(f, "FEATURE:{name}"),
            fixed => {
                let name = FIXED
                    .iter()
                    .find(|(_, k)| k == fixed)
                    .map(|(n, _)| *n)
                    .unwrap_or("?");
                f.write_str(name)
            }
        }
    }
}

impl FromStr for MeasurementKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some((_, k)) = FIXED.iter().find(|(n, _)| *n == s) {
            return Ok(k.clone());
        }
        let tagged = |prefix: &str| s.strip_prefix(prefix).filter(|rest| !rest.is_empty());
        if let Some(code) = tagged("QUESTIONNAIRE_ITEM:") {
            return Ok(MeasurementKind::QuestionnaireItem(code.to_string()));
        }
        if let Some(name) = tagged("FEATURE:") {
            return Ok(MeasurementKind::Feature(name.to_string()));
        }
        Err(Error::Semantic(format!("unknown measurement kind `{s}`")))
    }
}

impl Serialize for MeasurementKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MeasurementKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Silent records come from sensors; no-silent ones are typed in by the
/// patient or a caregiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AcquisitionMode {
    #[serde(rename = "SILENT")]
    Silent,
    #[serde(rename = "NOSILENT")]
    NoSilent,
}

impl AcquisitionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AcquisitionMode::Silent => "SILENT",
            AcquisitionMode::NoSilent => "NOSILENT",
        }
    }
}

impl FromStr for AcquisitionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "SILENT" => Ok(AcquisitionMode::Silent),
            "NOSILENT" => Ok(AcquisitionMode::NoSilent),
            other => Err(Error::invalid(format!(
                "unknown acquisition mode `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub patient_id: String,
    pub kind: MeasurementKind,
    pub value: f64,
    /// UTC epoch milliseconds.
    pub timestamp: TimestampMs,
    pub mode: AcquisitionMode,
}

impl MeasurementRecord {
    pub fn new(
        patient_id: impl Into<String>,
        kind: MeasurementKind,
        value: f64,
        timestamp: TimestampMs,
        mode: AcquisitionMode,
    ) -> Self {
        Self {
            patient_id: patient_id.into(),
            kind,
            value,
            timestamp,
            mode,
        }
    }

    pub fn silent(
        patient_id: impl Into<String>,
        kind: MeasurementKind,
        value: f64,
        timestamp: TimestampMs,
    ) -> Self {
        Self::new(patient_id, kind, value, timestamp, AcquisitionMode::Silent)
    }
}

/// Reads `patient_id,kind,value,timestamp,mode` CSV. Timestamps may be ISO
/// 8601 or epoch milliseconds; `mode` defaults to SILENT when the column is
/// absent or empty.
pub fn read_measurements_csv<R: Read>(reader: R) -> Result<Vec<MeasurementRecord>> {
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| {
        column(name).ok_or_else(|| Error::Schema(format!("measurement CSV lacks column `{name}`")))
    };
    let (pid, kind, value, ts) = (
        required("patient_id")?,
        required("kind")?,
        required("value")?,
        required("timestamp")?,
    );
    let mode = column("mode");
    let mut out = Vec::new();
    for (line, row) in csv.records().enumerate() {
        let row = row?;
        let at = |e: Error| Error::Ingestion(format!("measurement row {}: {e}", line + 2));
        let field = |i: usize| row.get(i).unwrap_or("");
        let v: f64 = field(value)
            .parse()
            .map_err(|_| at(Error::invalid(format!("bad value `{}`", field(value)))))?;
        out.push(MeasurementRecord {
            patient_id: field(pid).to_string(),
            kind: field(kind).parse().map_err(at)?,
            value: v,
            timestamp: parse_timestamp(field(ts)).map_err(at)?,
            mode: match mode.map(field) {
                None | Some("") => AcquisitionMode::Silent,
                Some(m) => m.parse().map_err(at)?,
            },
        });
    }
    Ok(out)
}
