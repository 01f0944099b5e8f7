//! Canonical outbound XML.
//!
//! ```xml
//! <chronious-msg schema="1" patient="p-001" urgency="IMMEDIATE" created="2026-03-02T08:00:00.000Z">
//!   <alerts>
//!     <alert rule="hr-above-120" severity="ALARM" fired="..." message="...">
//!       <evidence kind="HEART_RATE" ts="..."/>
//!     </alert>
//!   </alerts>
//!   <features><feature name="sdnn_ms" type="num" value="41.2"/></features>
//!   <measurements from="0"><m kind="HEART_RATE" value="125" ts="..." mode="SILENT"/></measurements>
//! </chronious-msg>
//! ```
//!
//! Canonical form has no whitespace between elements, the attribute order
//! shown above, and self-closed empty sections.

use roxmltree::{Document, Node};
use serde::{Deserialize, Serialize};

use crate::classify::Value;
use crate::error::{Error, Result};
use crate::measurement::{AcquisitionMode, MeasurementKind, MeasurementRecord};
use crate::rules::{Alert, EvidenceRef, Severity};
use crate::time::{format_iso, parse_timestamp, TimestampMs};

pub const MESSAGE_SCHEMA: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Urgency {
    #[serde(rename = "IMMEDIATE")]
    Immediate,
    #[serde(rename = "SCHEDULED")]
    Scheduled,
}

impl Urgency {
    pub fn as_str(self) -> &'static str {
        match self {
            Urgency::Immediate => "IMMEDIATE",
            Urgency::Scheduled => "SCHEDULED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutboundMessage {
    pub patient_id: String,
    pub created_at: TimestampMs,
    pub urgency: Urgency,
    pub alerts: Vec<Alert>,
    /// Latest feature snapshot, present attributes only, in schema order.
    pub features: Vec<(String, Value)>,
    /// Position of the first carried record in the patient's store log.
    pub first_seq: usize,
    pub measurements: Vec<MeasurementRecord>,
}

impl OutboundMessage {
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Integrity(m));
        let has_alarm = self.alerts.iter().any(|a| a.severity == Severity::Alarm);
        if has_alarm != (self.urgency == Urgency::Immediate) {
            return bad(format!(
                "urgency {} with{} an ALARM alert",
                self.urgency.as_str(),
                if has_alarm { "" } else { "out" }
            ));
        }
        if self.patient_id.is_empty() {
            return bad("message has no patient id".into());
        }
        for a in &self.alerts {
            if a.patient_id != self.patient_id {
                return bad(format!(
                    "alert `{}` is for patient `{}`",
                    a.rule_id, a.patient_id
                ));
            }
            if a.evidence.is_empty() {
                return bad(format!("alert `{}` cites no evidence", a.rule_id));
            }
        }
        for r in &self.measurements {
            if r.patient_id != self.patient_id {
                return bad(format!("measurement for patient `{}`", r.patient_id));
            }
            if !r.value.is_finite() {
                return bad(format!("non-finite {} value", r.kind));
            }
        }
        let mut names = std::collections::HashSet::new();
        for (name, v) in &self.features {
            if name.is_empty() || !names.insert(name) {
                return bad(format!("feature name `{name}` empty or repeated"));
            }
            if matches!(v, Value::Num(x) if !x.is_finite()) {
                return bad(format!("feature `{name}` is not finite"));
            }
        }
        Ok(())
    }
}

fn escape(text: &str) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\t' => out.push_str("&#9;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            c if (c as u32) < 0x20 || c == '\u{FFFE}' || c == '\u{FFFF}' => {
                return Err(Error::Integrity(format!(
                    "character U+{:04X} cannot appear in XML",
                    c as u32
                )))
            }
            c => out.push(c),
        }
    }
    Ok(out)
}

struct Writer {
    out: String,
}

impl Writer {
    fn open(&mut self, name: &str, attrs: &[(&str, String)], empty: bool) -> Result<()> {
        self.out.push('<');
        self.out.push_str(name);
        for (k, v) in attrs {
            self.out.push_str(&format!(" {k}=\"{}\"", escape(v)?));
        }
        self.out.push_str(if empty { "/>" } else { ">" });
        Ok(())
    }

    fn close(&mut self, name: &str) {
        self.out.push_str(&format!("</{name}>"));
    }
}

/// Canonical serialization. Fails when the message breaks its invariants.
pub fn build_message_xml(msg: &OutboundMessage) -> Result<String> {
    msg.check()?;
    let mut w = Writer {
        out: String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>"),
    };
    w.open(
        "chronious-msg",
        &[
            ("schema", MESSAGE_SCHEMA.to_string()),
            ("patient", msg.patient_id.clone()),
            ("urgency", msg.urgency.as_str().to_string()),
            ("created", format_iso(msg.created_at)),
        ],
        false,
    )?;
    w.open("alerts", &[], msg.alerts.is_empty())?;
    if !msg.alerts.is_empty() {
        for a in &msg.alerts {
            w.open(
                "alert",
                &[
                    ("rule", a.rule_id.clone()),
                    ("severity", a.severity.as_str().to_string()),
                    ("fired", format_iso(a.fired_at)),
                    ("message", a.message.clone()),
                ],
                false,
            )?;
            for e in &a.evidence {
                w.open(
                    "evidence",
                    &[
                        ("kind", e.kind.to_string()),
                        ("ts", format_iso(e.timestamp)),
                    ],
                    true,
                )?;
            }
            w.close("alert");
        }
        w.close("alerts");
    }
    w.open("features", &[], msg.features.is_empty())?;
    if !msg.features.is_empty() {
        for (name, v) in &msg.features {
            let (ty, text) = match v {
                Value::Num(x) => ("num", x.to_string()),
                Value::Cat(s) => ("cat", s.clone()),
            };
            w.open(
                "feature",
                &[("name", name.clone()), ("type", ty.into()), ("value", text)],
                true,
            )?;
        }
        w.close("features");
    }
    let from = [("from", msg.first_seq.to_string())];
    w.open("measurements", &from, msg.measurements.is_empty())?;
    if !msg.measurements.is_empty() {
        for r in &msg.measurements {
            w.open(
                "m",
                &[
                    ("kind", r.kind.to_string()),
                    ("value", r.value.to_string()),
                    ("ts", format_iso(r.timestamp)),
                    ("mode", r.mode.as_str().to_string()),
                ],
                true,
            )?;
        }
        w.close("measurements");
    }
    w.close("chronious-msg");
    w.out.push('\n');
    Ok(w.out)
}

/// Parses and validates a message: element and attribute sets must match the
/// layout exactly, values must be well-typed, and the message invariants
/// must hold.
pub fn parse_message_xml(text: &str) -> Result<OutboundMessage> {
    let doc = Document::parse(text).map_err(|e| Error::Parse {
        line: e.pos().row,
        column: e.pos().col,
        message: e.to_string(),
    })?;
    let v = Validator { doc: &doc };
    let root = doc.root_element();
    v.element(
        root,
        "chronious-msg",
        &["schema", "patient", "urgency", "created"],
    )?;
    if v.attr(root, "schema")? != MESSAGE_SCHEMA {
        return Err(v.err(root, "unsupported message schema"));
    }
    let patient_id = v.attr(root, "patient")?.to_string();
    let urgency = match v.attr(root, "urgency")? {
        "IMMEDIATE" => Urgency::Immediate,
        "SCHEDULED" => Urgency::Scheduled,
        _ => return Err(v.err(root, "urgency must be IMMEDIATE or SCHEDULED")),
    };
    let created_at = v.time(root, "created")?;
    let sections: Vec<Node> = v.children(root)?;
    let [alerts_el, features_el, measurements_el] = sections.as_slice() else {
        return Err(v.err(
            root,
            "expected <alerts>, <features> and <measurements> in that order",
        ));
    };
    v.element(*alerts_el, "alerts", &[])?;
    v.element(*features_el, "features", &[])?;
    v.element(*measurements_el, "measurements", &["from"])?;

    let mut alerts = Vec::new();
    for a in v.children(*alerts_el)? {
        v.element(a, "alert", &["rule", "severity", "fired", "message"])?;
        let severity = match v.attr(a, "severity")? {
            "ALARM" => Severity::Alarm,
            "LIGHT_ALERT" => Severity::LightAlert,
            _ => return Err(v.err(a, "severity must be ALARM or LIGHT_ALERT")),
        };
        let mut evidence = Vec::new();
        for e in v.children(a)? {
            v.element(e, "evidence", &["kind", "ts"])?;
            v.no_children(e)?;
            evidence.push(EvidenceRef {
                kind: v.kind(e)?,
                timestamp: v.time(e, "ts")?,
            });
        }
        alerts.push(Alert {
            rule_id: v.attr(a, "rule")?.to_string(),
            patient_id: patient_id.clone(),
            severity,
            fired_at: v.time(a, "fired")?,
            message: v.attr(a, "message")?.to_string(),
            evidence,
        });
    }
    let mut features = Vec::new();
    for f in v.children(*features_el)? {
        v.element(f, "feature", &["name", "type", "value"])?;
        v.no_children(f)?;
        let text = v.attr(f, "value")?;
        let value = match v.attr(f, "type")? {
            "num" => Value::Num(v.number(f, text)?),
            "cat" => Value::Cat(text.to_string()),
            _ => return Err(v.err(f, "feature type must be num or cat")),
        };
        features.push((v.attr(f, "name")?.to_string(), value));
    }
    let first_seq = v
        .attr(*measurements_el, "from")?
        .parse::<usize>()
        .map_err(|_| v.err(*measurements_el, "`from` must be a non-negative integer"))?;
    let mut measurements = Vec::new();
    for m in v.children(*measurements_el)? {
        v.element(m, "m", &["kind", "value", "ts", "mode"])?;
        v.no_children(m)?;
        measurements.push(MeasurementRecord {
            patient_id: patient_id.clone(),
            kind: v.kind(m)?,
            value: v.number(m, v.attr(m, "value")?)?,
            timestamp: v.time(m, "ts")?,
            mode: v
                .attr(m, "mode")?
                .parse::<AcquisitionMode>()
                .map_err(|_| v.err(m, "mode must be SILENT or NOSILENT"))?,
        });
    }
    let msg = OutboundMessage {
        patient_id,
        created_at,
        urgency,
        alerts,
        features,
        first_seq,
        measurements,
    };
    msg.check()?;
    Ok(msg)
}

struct Validator<'a, 'i> {
    doc: &'a Document<'i>,
}

impl<'a, 'i> Validator<'a, 'i> {
    fn err(&self, node: Node, message: &str) -> Error {
        let p = self.doc.text_pos_at(node.range().start);
        Error::Schema(format!(
            "<{}> at line {}, column {}: {message}",
            node.tag_name().name(),
            p.row,
            p.col
        ))
    }

    fn element(&self, node: Node, name: &str, attrs: &[&str]) -> Result<()> {
        if node.tag_name().name() != name || node.tag_name().namespace().is_some() {
            return Err(self.err(node, &format!("expected <{name}>")));
        }
        let got: Vec<&str> = node.attributes().map(|a| a.name()).collect();
        if got != attrs {
            return Err(self.err(
                node,
                &format!("attributes must be exactly {attrs:?} in order, found {got:?}"),
            ));
        }
        Ok(())
    }

    /// Element children; any non-whitespace text is an error.
    fn children(&self, node: Node<'a, 'i>) -> Result<Vec<Node<'a, 'i>>> {
        let mut out = Vec::new();
        for c in node.children() {
            if c.is_element() {
                out.push(c);
            } else if c.is_text() && !c.text().unwrap_or("").trim().is_empty() {
                return Err(self.err(node, "unexpected text content"));
            }
        }
        Ok(out)
    }

    fn no_children(&self, node: Node) -> Result<()> {
        if node.has_children() {
            return Err(self.err(node, "must be empty"));
        }
        Ok(())
    }

    fn attr<'n>(&self, node: Node<'n, 'i>, name: &str) -> Result<&'n str> {
        node.attribute(name)
            .ok_or_else(|| self.err(node, &format!("missing `{name}`")))
    }

    fn time(&self, node: Node, name: &str) -> Result<TimestampMs> {
        parse_timestamp(self.attr(node, name)?)
            .map_err(|_| self.err(node, &format!("`{name}` is not a timestamp")))
    }

    fn kind(&self, node: Node) -> Result<MeasurementKind> {
        self.attr(node, "kind")?
            .parse()
            .map_err(|_| self.err(node, "unknown measurement kind"))
    }

    fn number(&self, node: Node, text: &str) -> Result<f64> {
        match text.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(self.err(node, &format!("`{text}` is not a finite number"))),
        }
    }
}
