use chrono::NaiveTime;
use serde::{Deserialize, Serialize};

use super::store::TransmitState;
use super::xml::{OutboundMessage, Urgency};
use crate::classify::Value;
use crate::error::{Error, Result};
use crate::messaging::MeasurementStore;
use crate::rules::{Alert, Severity};
use crate::time::{TimestampMs, MS_PER_DAY};

/// One send per day at a fixed UTC time of day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    /// Milliseconds after UTC midnight.
    pub send_offset_ms: i64,
}

impl Schedule {
    /// `HH:MM` or `HH:MM:SS`, UTC.
    pub fn daily_at(text: &str) -> Result<Schedule> {
        let t = NaiveTime::parse_from_str(text, "%H:%M")
            .or_else(|_| NaiveTime::parse_from_str(text, "%H:%M:%S"))
            .map_err(|_| Error::invalid(format!("bad send time `{text}`, expected HH:MM")))?;
        let midnight = NaiveTime::MIN;
        Ok(Schedule {
            send_offset_ms: (t - midnight).num_milliseconds(),
        })
    }

    /// The latest slot at or before `t`.
    pub fn slot_at_or_before(&self, t: TimestampMs) -> TimestampMs {
        let day = t.div_euclid(MS_PER_DAY) * MS_PER_DAY;
        let slot = day + self.send_offset_ms;
        if slot <= t {
            slot
        } else {
            slot - MS_PER_DAY
        }
    }

    /// The first slot strictly after `t`.
    pub fn next_slot_after(&self, t: TimestampMs) -> TimestampMs {
        self.slot_at_or_before(t) + MS_PER_DAY
    }
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            send_offset_ms: 8 * 3_600_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Send(Urgency),
    Hold,
}

/// Any ALARM sends at once. Otherwise a send is scheduled when the first
/// slot after the previous scheduled send has come; with no previous send
/// the slot is already due.
pub fn decide_transmission(
    alerts: &[Alert],
    schedule: &Schedule,
    now: TimestampMs,
    last_scheduled_send: Option<TimestampMs>,
) -> Decision {
    if alerts.iter().any(|a| a.severity == Severity::Alarm) {
        return Decision::Send(Urgency::Immediate);
    }
    let due = match last_scheduled_send {
        None => true,
        Some(last) => now >= schedule.next_slot_after(last),
    };
    if due {
        Decision::Send(Urgency::Scheduled)
    } else {
        Decision::Hold
    }
}

/// Decides and, when sending, builds the message: pending light alerts plus
/// the new alerts, the feature snapshot, and every record appended since
/// the last send. On hold, light alerts are queued in the returned state.
pub fn prepare_message(
    store: &MeasurementStore,
    state: &TransmitState,
    patient_id: &str,
    alerts: &[Alert],
    features: Vec<(String, Value)>,
    schedule: &Schedule,
    now: TimestampMs,
) -> (Option<OutboundMessage>, TransmitState) {
    let mut carried = state.pending_alerts.clone();
    for a in alerts {
        if !carried
            .iter()
            .any(|c| c.rule_id == a.rule_id && c.fired_at == a.fired_at)
        {
            carried.push(a.clone());
        }
    }
    carried.sort_by(|a, b| {
        (a.severity, &a.rule_id, a.fired_at).cmp(&(b.severity, &b.rule_id, b.fired_at))
    });
    match decide_transmission(alerts, schedule, now, state.last_scheduled_send) {
        Decision::Hold => {
            let next = TransmitState {
                pending_alerts: carried,
                ..state.clone()
            };
            (None, next)
        }
        Decision::Send(urgency) => {
            let records = store.records(patient_id);
            let start = state.sent_records.min(records.len());
            let msg = OutboundMessage {
                patient_id: patient_id.to_string(),
                created_at: now,
                urgency,
                alerts: carried,
                features,
                first_seq: start,
                measurements: records[start..].to_vec(),
            };
            let next = TransmitState {
                sent_records: records.len(),
                last_scheduled_send: if urgency == Urgency::Scheduled {
                    Some(schedule.slot_at_or_before(now))
                } else {
                    state.last_scheduled_send
                },
                pending_alerts: Vec::new(),
            };
            (Some(msg), next)
        }
    }
}
