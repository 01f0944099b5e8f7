//! Append-only measurement store: one newline-delimited JSON file per
//! patient plus an in-memory index.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{MeasurementKind, MeasurementRecord};
use crate::rules::Alert;
use crate::time::TimestampMs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub record: MeasurementRecord,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub appended: usize,
    /// Records already stored with the same key and value.
    pub duplicates: usize,
    pub rejected: Vec<Rejection>,
}

/// What has already left the device for one patient.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransmitState {
    /// Length of the patient's record log already sent.
    pub sent_records: usize,
    pub last_scheduled_send: Option<TimestampMs>,
    /// Light alerts waiting for the next send.
    pub pending_alerts: Vec<Alert>,
}

#[derive(Debug, Default)]
struct PatientLog {
    records: Vec<MeasurementRecord>,
    /// (kind, timestamp) -> position in `records`.
    index: BTreeMap<(MeasurementKind, TimestampMs), usize>,
}

impl PatientLog {
    fn latest(&self, kind: &MeasurementKind) -> Option<TimestampMs> {
        self.index
            .range((kind.clone(), TimestampMs::MIN)..=(kind.clone(), TimestampMs::MAX))
            .next_back()
            .map(|((_, t), _)| *t)
    }

    fn push(&mut self, r: MeasurementRecord) {
        self.index
            .insert((r.kind.clone(), r.timestamp), self.records.len());
        self.records.push(r);
    }
}

#[derive(Debug, Default)]
pub struct MeasurementStore {
    dir: Option<PathBuf>,
    patients: BTreeMap<String, PatientLog>,
}

/// Keeps `[A-Za-z0-9._-]` and percent-encodes every other byte.
pub fn file_stem(patient: &str) -> String {
    let mut out = String::new();
    for b in patient.bytes() {
        if b.is_ascii_alphanumeric() || b == b'_' || b == b'-' || (b == b'.' && !out.is_empty()) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

impl MeasurementStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a store directory and loads every patient
    /// log. A trailing partial line left by an interrupted write is cut off.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut store = MeasurementStore {
            dir: Some(dir.clone()),
            patients: BTreeMap::new(),
        };
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            truncate_partial_line(&path)?;
            let reader = BufReader::new(File::open(&path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let r: MeasurementRecord = serde_json::from_str(&line).map_err(|e| {
                    Error::Integrity(format!("{} line {}: {e}", path.display(), n + 1))
                })?;
                if path.file_stem().and_then(|s| s.to_str())
                    != Some(file_stem(&r.patient_id).as_str())
                {
                    return Err(Error::Integrity(format!(
                        "{} line {} belongs to patient `{}`",
                        path.display(),
                        n + 1,
                        r.patient_id
                    )));
                }
                store
                    .patients
                    .entry(r.patient_id.clone())
                    .or_default()
                    .push(r);
            }
        }
        Ok(store)
    }

    fn log_path(&self, patient: &str) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(format!("{}.jsonl", file_stem(patient))))
    }

    fn state_path(&self, patient: &str) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(format!("{}.state.json", file_stem(patient))))
    }

    /// Appends the acceptable records of a batch. The batch is taken in
    /// timestamp order; a record older than the newest stored one of its
    /// kind, a non-finite value or a conflicting value at an existing key is
    /// rejected with a reason, and the rest of the batch still goes in.
    pub fn ingest(
        &mut self,
        records: impl IntoIterator<Item = MeasurementRecord>,
    ) -> Result<IngestReport> {
        let mut batch: Vec<MeasurementRecord> = records.into_iter().collect();
        batch.sort_by_key(|r| r.timestamp);
        let mut report = IngestReport::default();
        let mut lines: HashMap<String, String> = HashMap::new();
        for r in batch {
            let reject = |reason: &str| Rejection {
                record: r.clone(),
                reason: reason.to_string(),
            };
            if !r.value.is_finite() {
                report.rejected.push(reject("non-finite value"));
                continue;
            }
            if r.patient_id.is_empty() {
                report.rejected.push(reject("empty patient id"));
                continue;
            }
            let log = self.patients.entry(r.patient_id.clone()).or_default();
            if let Some(&at) = log.index.get(&(r.kind.clone(), r.timestamp)) {
                if log.records[at].value == r.value {
                    report.duplicates += 1;
                } else {
                    report
                        .rejected
                        .push(reject("conflicting value for an existing timestamp"));
                }
                continue;
            }
            if log.latest(&r.kind).is_some_and(|t| r.timestamp < t) {
                report
                    .rejected
                    .push(reject("older than the newest stored record of this kind"));
                continue;
            }
            let line = lines.entry(r.patient_id.clone()).or_default();
            line.push_str(&serde_json::to_string(&r)?);
            line.push('\n');
            log.push(r);
            report.appended += 1;
        }
        let mut patients: Vec<_> = lines.into_iter().collect();
        patients.sort();
        for (patient, text) in patients {
            if let Some(path) = self.log_path(&patient) {
                let mut f = OpenOptions::new().create(true).append(true).open(path)?;
                f.write_all(text.as_bytes())?;
                f.sync_data()?;
            }
        }
        Ok(report)
    }

    pub fn patients(&self) -> impl Iterator<Item = &str> {
        self.patients.keys().map(String::as_str)
    }

    /// The patient's records in append order.
    pub fn records(&self, patient: &str) -> &[MeasurementRecord] {
        self.patients
            .get(patient)
            .map(|l| l.records.as_slice())
            .unwrap_or(&[])
    }

    /// Records of one kind with `from <= timestamp <= to`, oldest first.
    pub fn query(
        &self,
        patient: &str,
        kind: &MeasurementKind,
        from: TimestampMs,
        to: TimestampMs,
    ) -> Vec<&MeasurementRecord> {
        let Some(log) = self.patients.get(patient) else {
            return Vec::new();
        };
        if from > to {
            return Vec::new();
        }
        log.index
            .range((kind.clone(), from)..=(kind.clone(), to))
            .map(|(_, &i)| &log.records[i])
            .collect()
    }

    pub fn transmit_state(&self, patient: &str) -> Result<TransmitState> {
        match self.state_path(patient) {
            Some(p) if p.exists() => Ok(serde_json::from_str(&fs::read_to_string(p)?)?),
            _ => Ok(TransmitState::default()),
        }
    }

    /// Persists the state through a temporary file and rename.
    pub fn save_transmit_state(&self, patient: &str, state: &TransmitState) -> Result<()> {
        if let Some(path) = self.state_path(patient) {
            let tmp = path.with_extension("json.tmp");
            fs::write(&tmp, serde_json::to_string(state)?)?;
            fs::rename(tmp, path)?;
        }
        Ok(())
    }
}

fn truncate_partial_line(path: &Path) -> Result<()> {
    let bytes = fs::read(path)?;
    if bytes.is_empty() || bytes.last() == Some(&b'\n') {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    OpenOptions::new()
        .write(true)
        .open(path)?
        .set_len(keep as u64)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hr(v: f64, t: TimestampMs) -> MeasurementRecord {
        MeasurementRecord::silent("p/1", MeasurementKind::HeartRate, v, t)
    }

    #[test]
    fn partial_accept_and_idempotence() {
        let mut s = MeasurementStore::in_memory();
        assert_eq!(s.ingest(vec![]).unwrap().appended, 0);
        let batch = vec![
            hr(70.0, 1),
            hr(f64::NAN, 2),
            hr(72.0, 3),
            hr(71.0, 4),
            hr(73.0, 5),
        ];
        let r = s.ingest(batch.clone()).unwrap();
        assert_eq!((r.appended, r.rejected.len()), (4, 1));
        assert_eq!(r.rejected[0].reason, "non-finite value");
        let again = s.ingest(batch).unwrap();
        assert_eq!((again.appended, again.duplicates), (0, 4));
        let late = s.ingest(vec![hr(60.0, 0), hr(99.0, 3)]).unwrap();
        assert_eq!(late.rejected.len(), 2);
    }

    #[test]
    fn reload_and_truncate() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = MeasurementStore::open(dir.path()).unwrap();
        s.ingest(vec![hr(70.0, 1), hr(72.0, 2)]).unwrap();
        let path = dir.path().join("p%2F1.jsonl");
        assert!(path.exists());
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"patient_id\":\"p/1\",\"ki").unwrap();
        drop(f);
        let back = MeasurementStore::open(dir.path()).unwrap();
        assert_eq!(back.records("p/1"), s.records("p/1"));
        assert!(fs::read(&path).unwrap().ends_with(b"\n"));
        assert_eq!(
            back.query("p/1", &MeasurementKind::HeartRate, 2, 10).len(),
            1
        );
    }

    #[test]
    fn transmit_state_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = MeasurementStore::open(dir.path()).unwrap();
        assert_eq!(s.transmit_state("a").unwrap(), TransmitState::default());
        let st = TransmitState {
            sent_records: 3,
            last_scheduled_send: Some(9),
            pending_alerts: vec![],
        };
        s.save_transmit_state("a", &st).unwrap();
        assert_eq!(s.transmit_state("a").unwrap(), st);
    }
}
