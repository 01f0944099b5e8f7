//! If-then alert rules read from XML and evaluated against a patient's
//! measurement history.
//!
//! ```xml
//! <rules schema="1">
//!   <rule id="hr-high" scope="BOTH" severity="ALARM" message="Heart rate above 120 bpm">
//!     <threshold kind="HEART_RATE" op="gt" value="120"/>
//!   </rule>
//! </rules>
//! ```

mod eval;
mod parse;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::measurement::MeasurementKind;
use crate::time::TimestampMs;

pub use eval::{evaluate, evaluate_report, explain, EvaluationReport};
pub use parse::parse_rules;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "lt")]
    Lt,
    #[serde(rename = "le")]
    Le,
    #[serde(rename = "gt")]
    Gt,
    #[serde(rename = "ge")]
    Ge,
    #[serde(rename = "eq")]
    Eq,
}

impl Op {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Op::Lt => lhs < rhs,
            Op::Le => lhs <= rhs,
            Op::Gt => lhs > rhs,
            Op::Ge => lhs >= rhs,
            Op::Eq => lhs == rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
            Op::Eq => "=",
        }
    }

    fn parse(text: &str) -> Option<Op> {
        Some(match text {
            "lt" => Op::Lt,
            "le" => Op::Le,
            "gt" => Op::Gt,
            "ge" => Op::Ge,
            "eq" => Op::Eq,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Disease {
    #[serde(rename = "COPD")]
    Copd,
    #[serde(rename = "CKD")]
    Ckd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scope {
    #[serde(rename = "COPD")]
    Copd,
    #[serde(rename = "CKD")]
    Ckd,
    #[serde(rename = "BOTH")]
    Both,
}

impl Scope {
    pub fn covers(self, disease: Disease) -> bool {
        matches!(
            (self, disease),
            (Scope::Both, _) | (Scope::Copd, Disease::Copd) | (Scope::Ckd, Disease::Ckd)
        )
    }
}

/// Declaration order is the alert sort order: alarms first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    #[serde(rename = "ALARM")]
    Alarm,
    #[serde(rename = "LIGHT_ALERT")]
    LightAlert,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Alarm => "ALARM",
            Severity::LightAlert => "LIGHT_ALERT",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    /// Latest value at or before `now` compared with `value`.
    Threshold {
        kind: MeasurementKind,
        op: Op,
        value: f64,
    },
    /// Relative change (%) from the earliest value inside the window to the
    /// latest one.
    PercentChange {
        kind: MeasurementKind,
        op: Op,
        percent: f64,
        window_hours: f64,
    },
    /// Every value in the trailing window satisfies `op value`; needs at
    /// least two values.
    Sustained {
        kind: MeasurementKind,
        op: Op,
        value: f64,
        duration_minutes: f64,
    },
    And(Vec<Condition>),
    Or(Vec<Condition>),
    Not(Box<Condition>),
}

impl Condition {
    /// Every measurement kind the condition reads.
    pub fn kinds(&self) -> BTreeSet<MeasurementKind> {
        let mut out = BTreeSet::new();
        self.collect_kinds(&mut out);
        out
    }

    fn collect_kinds(&self, out: &mut BTreeSet<MeasurementKind>) {
        match self {
            Condition::Threshold { kind, .. }
            | Condition::PercentChange { kind, .. }
            | Condition::Sustained { kind, .. } => {
                out.insert(kind.clone());
            }
            Condition::And(cs) | Condition::Or(cs) => cs.iter().for_each(|c| c.collect_kinds(out)),
            Condition::Not(c) => c.collect_kinds(out),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, cs: &[Condition], word: &str| {
            f.write_str("(")?;
            for (i, c) in cs.iter().enumerate() {
                if i > 0 {
                    write!(f, " {word} ")?;
                }
                write!(f, "{c}")?;
            }
            f.write_str(")")
        };
        match self {
            Condition::Threshold { kind, op, value } => write!(f, "{kind} {} {value}", op.symbol()),
            Condition::PercentChange {
                kind,
                op,
                percent,
                window_hours,
            } => write!(
                f,
                "change({kind}, {window_hours} h) {} {percent}%",
                op.symbol()
            ),
            Condition::Sustained {
                kind,
                op,
                value,
                duration_minutes,
            } => write!(
                f,
                "{kind} {} {value} for {duration_minutes} min",
                op.symbol()
            ),
            Condition::And(cs) => join(f, cs, "AND"),
            Condition::Or(cs) => join(f, cs, "OR"),
            Condition::Not(c) => write!(f, "NOT {c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub id: String,
    pub scope: Scope,
    pub condition: Condition,
    pub severity: Severity,
    pub message: String,
}

/// Parsed rules in document order. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleSet {
    rules: Vec<Rule>,
}

impl RuleSet {
    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    /// The rules whose scope covers `disease`.
    pub fn for_disease(&self, disease: Disease) -> RuleSet {
        RuleSet {
            rules: self
                .rules
                .iter()
                .filter(|r| r.scope.covers(disease))
                .cloned()
                .collect(),
        }
    }
}

/// Points at one stored record by its key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EvidenceRef {
    pub kind: MeasurementKind,
    pub timestamp: TimestampMs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub rule_id: String,
    pub patient_id: String,
    pub severity: Severity,
    pub fired_at: TimestampMs,
    pub message: String,
    pub evidence: Vec<EvidenceRef>,
}
