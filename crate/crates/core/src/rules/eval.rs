use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use super::{Alert, Condition, EvidenceRef, Rule, RuleSet};
use crate::error::{Error, Result};
use crate::measurement::{MeasurementKind, MeasurementRecord};
use crate::time::{format_iso, TimestampMs, MS_PER_HOUR, MS_PER_MINUTE};

/// One evaluation, written as a single JSON line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub patient: String,
    pub ts: String,
    pub alerts: Vec<Alert>,
    /// Rules not evaluated because a kind they read has no record yet.
    pub skipped_rules: Vec<String>,
}

impl EvaluationReport {
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// A patient's records at or before `now`, per kind, oldest first.
struct History<'a> {
    by_kind: BTreeMap<&'a MeasurementKind, Vec<&'a MeasurementRecord>>,
}

impl<'a> History<'a> {
    fn new(records: &'a [MeasurementRecord], patient_id: &str, now: TimestampMs) -> Self {
        let mut by_kind: BTreeMap<_, Vec<_>> = BTreeMap::new();
        for r in records
            .iter()
            .filter(|r| r.patient_id == patient_id && r.timestamp <= now)
        {
            by_kind.entry(&r.kind).or_default().push(r);
        }
        for list in by_kind.values_mut() {
            list.sort_by_key(|r| r.timestamp);
        }
        Self { by_kind }
    }

    fn series(&self, kind: &MeasurementKind) -> &[&'a MeasurementRecord] {
        self.by_kind.get(kind).map(Vec::as_slice).unwrap_or(&[])
    }

    fn has(&self, kind: &MeasurementKind) -> bool {
        !self.series(kind).is_empty()
    }
}

fn key(r: &MeasurementRecord) -> EvidenceRef {
    EvidenceRef {
        kind: r.kind.clone(),
        timestamp: r.timestamp,
    }
}

struct Outcome {
    holds: bool,
    evidence: BTreeSet<EvidenceRef>,
}

fn value_text(v: f64, kind: &MeasurementKind) -> String {
    match kind.unit() {
        "" => format!("{v}"),
        "%" => format!("{v}%"),
        unit => format!("{v} {unit}"),
    }
}

fn window_start(now: TimestampMs, length_ms: f64) -> TimestampMs {
    now - length_ms.round() as TimestampMs
}

fn check(
    cond: &Condition,
    hist: &History,
    now: TimestampMs,
    trace: &mut Option<Vec<String>>,
    depth: usize,
) -> Outcome {
    let mut note = |text: String| {
        if let Some(t) = trace.as_mut() {
            t.push(format!("{}{text}", "  ".repeat(depth)));
        }
    };
    let verdict = |b: bool| if b { "holds" } else { "does not hold" };
    // The latest record stands in as evidence when a window is empty.
    let latest_only = |kind: &MeasurementKind| {
        hist.series(kind)
            .last()
            .map(|r| key(r))
            .into_iter()
            .collect()
    };
    match cond {
        Condition::Threshold { kind, op, value } => {
            let Some(last) = hist.series(kind).last() else {
                return Outcome {
                    holds: false,
                    evidence: BTreeSet::new(),
                };
            };
            let holds = op.holds(last.value, *value);
            note(format!(
                "{kind} latest {} at {}: {} {} {} {}",
                value_text(last.value, kind),
                format_iso(last.timestamp),
                last.value,
                op.symbol(),
                value,
                verdict(holds)
            ));
            Outcome {
                holds,
                evidence: latest_only(kind),
            }
        }
        Condition::PercentChange {
            kind,
            op,
            percent,
            window_hours,
        } => {
            let from = window_start(now, window_hours * MS_PER_HOUR as f64);
            let window: Vec<_> = hist
                .series(kind)
                .iter()
                .filter(|r| r.timestamp >= from)
                .collect();
            match (window.first(), window.last()) {
                (Some(first), Some(last)) if window.len() >= 2 && first.value != 0.0 => {
                    let change = (last.value - first.value) / first.value * 100.0;
                    let holds = op.holds(change, *percent);
                    note(format!(
                        "{kind} {} at {} -> {} at {} within {window_hours} h: {change:+.2}% {} {percent}% {}",
                        value_text(first.value, kind),
                        format_iso(first.timestamp),
                        value_text(last.value, kind),
                        format_iso(last.timestamp),
                        op.symbol(),
                        verdict(holds)
                    ));
                    Outcome {
                        holds,
                        evidence: [key(first), key(last)].into_iter().collect(),
                    }
                }
                _ => {
                    note(format!(
                        "{kind}: {} record(s) within {window_hours} h, change undefined, does not hold",
                        window.len()
                    ));
                    let evidence = if window.is_empty() {
                        latest_only(kind)
                    } else {
                        window.iter().map(|r| key(r)).collect()
                    };
                    Outcome {
                        holds: false,
                        evidence,
                    }
                }
            }
        }
        Condition::Sustained {
            kind,
            op,
            value,
            duration_minutes,
        } => {
            let from = window_start(now, duration_minutes * MS_PER_MINUTE as f64);
            let window: Vec<_> = hist
                .series(kind)
                .iter()
                .filter(|r| r.timestamp >= from)
                .collect();
            let failing = window.iter().filter(|r| !op.holds(r.value, *value)).count();
            let holds = window.len() >= 2 && failing == 0;
            note(format!(
                "{kind} over {duration_minutes} min: {} record(s), {failing} not {} {value}, {}",
                window.len(),
                op.symbol(),
                verdict(holds)
            ));
            let evidence = if window.is_empty() {
                latest_only(kind)
            } else {
                window.iter().map(|r| key(r)).collect()
            };
            Outcome { holds, evidence }
        }
        Condition::And(parts) | Condition::Or(parts) => {
            let all = matches!(cond, Condition::And(_));
            note(if all { "all of:" } else { "any of:" }.to_string());
            let outcomes: Vec<Outcome> = parts
                .iter()
                .map(|c| check(c, hist, now, trace, depth + 1))
                .collect();
            let holds = if all {
                outcomes.iter().all(|o| o.holds)
            } else {
                outcomes.iter().any(|o| o.holds)
            };
            // A satisfied OR cites only the branches that hold.
            let evidence = outcomes
                .into_iter()
                .filter(|o| all || !holds || o.holds)
                .flat_map(|o| o.evidence)
                .collect();
            Outcome { holds, evidence }
        }
        Condition::Not(inner) => {
            note("not:".to_string());
            let o = check(inner, hist, now, trace, depth + 1);
            Outcome {
                holds: !o.holds,
                evidence: o.evidence,
            }
        }
    }
}

fn skipped(rule: &Rule, hist: &History) -> bool {
    rule.condition.kinds().iter().any(|k| !hist.has(k))
}

/// Alerts for every rule that holds, alarms first then by rule id, plus the
/// ids of rules skipped for lack of data.
fn run(
    rules: &RuleSet,
    history: &[MeasurementRecord],
    patient_id: &str,
    now: TimestampMs,
) -> (Vec<Alert>, Vec<String>) {
    let hist = History::new(history, patient_id, now);
    let mut alerts = Vec::new();
    let mut skipped_rules = Vec::new();
    for rule in rules.rules() {
        if skipped(rule, &hist) {
            skipped_rules.push(rule.id.clone());
            continue;
        }
        let o = check(&rule.condition, &hist, now, &mut None, 0);
        if o.holds && !o.evidence.is_empty() {
            alerts.push(Alert {
                rule_id: rule.id.clone(),
                patient_id: patient_id.to_string(),
                severity: rule.severity,
                fired_at: now,
                message: rule.message.clone(),
                evidence: o.evidence.into_iter().collect(),
            });
        }
    }
    alerts.sort_by(|a, b| (a.severity, &a.rule_id).cmp(&(b.severity, &b.rule_id)));
    skipped_rules.sort();
    (alerts, skipped_rules)
}

/// Records later than `now` are ignored, so no alert cites them.
pub fn evaluate(
    rules: &RuleSet,
    history: &[MeasurementRecord],
    patient_id: &str,
    now: TimestampMs,
) -> Vec<Alert> {
    run(rules, history, patient_id, now).0
}

pub fn evaluate_report(
    rules: &RuleSet,
    history: &[MeasurementRecord],
    patient_id: &str,
    now: TimestampMs,
) -> EvaluationReport {
    let (alerts, skipped_rules) = run(rules, history, patient_id, now);
    EvaluationReport {
        patient: patient_id.to_string(),
        ts: format_iso(now),
        alerts,
        skipped_rules,
    }
}

/// A readable trace of why `alert` fired: the rule, each predicate with its
/// computed values, and the cited records.
pub fn explain(alert: &Alert, rules: &RuleSet, history: &[MeasurementRecord]) -> Result<String> {
    let rule = rules
        .get(&alert.rule_id)
        .ok_or_else(|| Error::Integrity(format!("alert cites unknown rule `{}`", alert.rule_id)))?;
    let hist = History::new(history, &alert.patient_id, alert.fired_at);
    let mut cited = Vec::new();
    for e in &alert.evidence {
        let found = hist
            .series(&e.kind)
            .iter()
            .find(|r| r.timestamp == e.timestamp);
        match found {
            Some(r) => cited.push(*r),
            None => {
                return Err(Error::Integrity(format!(
                    "alert `{}` cites {} at {} which is not in the history",
                    alert.rule_id,
                    e.kind,
                    format_iso(e.timestamp)
                )))
            }
        }
    }
    let mut trace = Some(Vec::new());
    check(&rule.condition, &hist, alert.fired_at, &mut trace, 1);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "rule {} [{}] for patient {} at {}",
        rule.id,
        rule.severity.as_str(),
        alert.patient_id,
        format_iso(alert.fired_at)
    );
    if !rule.message.is_empty() {
        let _ = writeln!(out, "  message: {}", rule.message);
    }
    let _ = writeln!(out, "  condition: {}", rule.condition);
    for line in trace.unwrap_or_default() {
        let _ = writeln!(out, "{line}");
    }
    let _ = writeln!(out, "  evidence:");
    for r in cited {
        let _ = writeln!(
            out,
            "    {} {} at {}",
            r.kind,
            value_text(r.value, &r.kind),
            format_iso(r.timestamp)
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::parse_rules;

    const H: i64 = MS_PER_HOUR;

    fn rec(kind: MeasurementKind, value: f64, ts: TimestampMs) -> MeasurementRecord {
        MeasurementRecord::silent("p", kind, value, ts)
    }

    fn rules(body: &str) -> RuleSet {
        parse_rules(&format!("<rules>{body}</rules>")).unwrap()
    }

    #[test]
    fn sustained_needs_two_and_all() {
        let set = rules(
            r#"<rule id="s" severity="LIGHT_ALERT"><sustained kind="SPO2" op="lt" value="90" duration_minutes="30"/></rule>"#,
        );
        let now = 10 * H;
        let one = [rec(MeasurementKind::Spo2, 85.0, now - 60_000)];
        assert!(evaluate(&set, &one, "p", now).is_empty());
        let two = [
            rec(MeasurementKind::Spo2, 85.0, now - 20 * 60_000),
            rec(MeasurementKind::Spo2, 88.0, now),
        ];
        assert_eq!(evaluate(&set, &two, "p", now)[0].evidence.len(), 2);
        let broken = [
            two[0].clone(),
            rec(MeasurementKind::Spo2, 91.0, now - 60_000),
            two[1].clone(),
        ];
        assert!(evaluate(&set, &broken, "p", now).is_empty());
        // An old value outside the window does not count.
        let old = [
            rec(MeasurementKind::Spo2, 99.0, now - 2 * H),
            two[0].clone(),
            two[1].clone(),
        ];
        assert_eq!(evaluate(&set, &old, "p", now).len(), 1);
    }

    #[test]
    fn ordering_skips_and_future_records() {
        let set = rules(
            r#"<rule id="b" severity="LIGHT_ALERT"><threshold kind="HEART_RATE" op="gt" value="100"/></rule>
               <rule id="z" severity="ALARM"><threshold kind="HEART_RATE" op="gt" value="120"/></rule>
               <rule id="a" severity="ALARM"><threshold kind="HEART_RATE" op="gt" value="110"/></rule>
               <rule id="g" severity="ALARM"><threshold kind="GLUCOSE" op="gt" value="200"/></rule>"#,
        );
        let hist = [
            rec(MeasurementKind::HeartRate, 125.0, 0),
            rec(MeasurementKind::HeartRate, 80.0, H),
        ];
        let report = evaluate_report(&set, &hist, "p", 0);
        let ids: Vec<_> = report.alerts.iter().map(|a| a.rule_id.as_str()).collect();
        assert_eq!(ids, ["a", "z", "b"]);
        assert_eq!(report.skipped_rules, ["g"]);
        assert!(evaluate(&set, &hist, "p", H).is_empty());
        assert!(evaluate(&set, &hist, "someone-else", 0).is_empty());
    }

    #[test]
    fn compound_evidence() {
        let set = rules(
            r#"<rule id="c" severity="ALARM"><or>
                 <threshold kind="HEART_RATE" op="gt" value="120"/>
                 <threshold kind="BODY_TEMPERATURE" op="gt" value="38"/>
               </or></rule>
               <rule id="n" severity="LIGHT_ALERT"><not><threshold kind="SPO2" op="ge" value="90"/></not></rule>"#,
        );
        let hist = [
            rec(MeasurementKind::HeartRate, 80.0, 0),
            rec(MeasurementKind::BodyTemperature, 38.5, 0),
            rec(MeasurementKind::Spo2, 88.0, 0),
        ];
        let alerts = evaluate(&set, &hist, "p", 0);
        assert_eq!(alerts.len(), 2);
        assert_eq!(alerts[0].evidence, vec![key(&hist[1])]);
        assert_eq!(alerts[1].evidence, vec![key(&hist[2])]);
    }

    #[test]
    fn zero_reference_never_fires() {
        let set = rules(
            r#"<rule id="p" severity="ALARM"><percent_change kind="GLUCOSE" op="gt" percent="1" window_hours="1"/></rule>"#,
        );
        let hist = [
            rec(MeasurementKind::Glucose, 0.0, 0),
            rec(MeasurementKind::Glucose, 5.0, 60_000),
        ];
        assert!(evaluate(&set, &hist, "p", 60_000).is_empty());
    }
}
