use std::collections::HashSet;

use roxmltree::{Document, Node};

use super::{Condition, Op, Rule, RuleSet, Scope, Severity};
use crate::error::{Error, Result};
use crate::measurement::MeasurementKind;

/// Parses a rule document. Nothing is returned unless the whole document is
/// valid.
pub fn parse_rules(xml: &str) -> Result<RuleSet> {
    let doc = Document::parse(xml).map_err(|e| {
        let (line, column) = match e {
            // roxmltree reports these at 1:1; the end of input is where the
            // document actually broke off.
            roxmltree::Error::UnclosedRootNode | roxmltree::Error::UnexpectedEndOfStream => {
                end_position(xml)
            }
            _ => (e.pos().row, e.pos().col),
        };
        Error::Parse {
            line,
            column,
            message: e.to_string(),
        }
    })?;
    let root = doc.root_element();
    let ctx = Ctx { doc: &doc };
    if root.tag_name().name() != "rules" {
        return Err(ctx.semantic(
            root,
            format!(
                "root element must be <rules>, found <{}>",
                root.tag_name().name()
            ),
        ));
    }
    ctx.only_attributes(root, &["schema"])?;
    if let Some(v) = root.attribute("schema") {
        if v != "1" {
            return Err(ctx.semantic(root, format!("unsupported rules schema `{v}`")));
        }
    }
    let mut seen = HashSet::new();
    let mut rules = Vec::new();
    for node in root.children().filter(Node::is_element) {
        if node.tag_name().name() != "rule" {
            return Err(ctx.semantic(
                node,
                format!("unknown element <{}>", node.tag_name().name()),
            ));
        }
        let rule = ctx.rule(node)?;
        if !seen.insert(rule.id.clone()) {
            return Err(ctx.semantic(node, format!("duplicate rule id `{}`", rule.id)));
        }
        rules.push(rule);
    }
    Ok(RuleSet { rules })
}

fn end_position(text: &str) -> (u32, u32) {
    let line = 1 + text.matches('\n').count();
    let column = 1 + text.rsplit('\n').next().unwrap_or("").chars().count();
    (line as u32, column as u32)
}

struct Ctx<'a, 'input> {
    doc: &'a Document<'input>,
}

impl Ctx<'_, '_> {
    fn semantic(&self, node: Node, message: String) -> Error {
        let pos = self.doc.text_pos_at(node.range().start);
        Error::Semantic(format!("{message} (line {}, column {})", pos.row, pos.col))
    }

    fn only_attributes(&self, node: Node, allowed: &[&str]) -> Result<()> {
        match node.attributes().find(|a| !allowed.contains(&a.name())) {
            Some(a) => Err(self.semantic(
                node,
                format!(
                    "unknown attribute `{}` on <{}>",
                    a.name(),
                    node.tag_name().name()
                ),
            )),
            None => Ok(()),
        }
    }

    fn required<'n>(&self, node: Node<'n, '_>, name: &str) -> Result<&'n str> {
        node.attribute(name).ok_or_else(|| {
            self.semantic(
                node,
                format!("<{}> needs attribute `{name}`", node.tag_name().name()),
            )
        })
    }

    fn number(&self, node: Node, name: &str) -> Result<f64> {
        let text = self.required(node, name)?;
        match text.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.semantic(
                node,
                format!("`{name}` must be a finite number, got `{text}`"),
            )),
        }
    }

    fn positive(&self, node: Node, name: &str) -> Result<f64> {
        let v = self.number(node, name)?;
        if v <= 0.0 {
            return Err(self.semantic(node, format!("`{name}` must be > 0, got {v}")));
        }
        Ok(v)
    }

    fn kind(&self, node: Node) -> Result<MeasurementKind> {
        let text = self.required(node, "kind")?;
        text.parse()
            .map_err(|_| self.semantic(node, format!("unknown measurement kind `{text}`")))
    }

    fn op(&self, node: Node) -> Result<Op> {
        let text = self.required(node, "op")?;
        Op::parse(text).ok_or_else(|| self.semantic(node, format!("unknown operator `{text}`")))
    }

    fn rule(&self, node: Node) -> Result<Rule> {
        self.only_attributes(node, &["id", "scope", "severity", "message"])?;
        let id = self.required(node, "id")?;
        if id.is_empty() {
            return Err(self.semantic(node, "rule id must not be empty".into()));
        }
        let scope = match node.attribute("scope").unwrap_or("BOTH") {
            "COPD" => Scope::Copd,
            "CKD" => Scope::Ckd,
            "BOTH" => Scope::Both,
            other => return Err(self.semantic(node, format!("unknown scope `{other}`"))),
        };
        let severity = match self.required(node, "severity")? {
            "ALARM" => Severity::Alarm,
            "LIGHT_ALERT" => Severity::LightAlert,
            other => return Err(self.semantic(node, format!("unknown severity `{other}`"))),
        };
        let mut children = node.children().filter(Node::is_element);
        let (Some(first), None) = (children.next(), children.next()) else {
            return Err(self.semantic(node, format!("rule `{id}` must hold exactly one condition")));
        };
        Ok(Rule {
            id: id.to_string(),
            scope,
            condition: self.condition(first)?,
            severity,
            message: node.attribute("message").unwrap_or_default().to_string(),
        })
    }

    fn condition(&self, node: Node) -> Result<Condition> {
        let name = node.tag_name().name();
        let children: Vec<Node> = node.children().filter(Node::is_element).collect();
        let leaf = |attrs: &[&str]| -> Result<()> {
            self.only_attributes(node, attrs)?;
            if !children.is_empty() {
                return Err(self.semantic(node, format!("<{name}> takes no child elements")));
            }
            Ok(())
        };
        match name {
            "threshold" => {
                leaf(&["kind", "op", "value"])?;
                Ok(Condition::Threshold {
                    kind: self.kind(node)?,
                    op: self.op(node)?,
                    value: self.number(node, "value")?,
                })
            }
            "percent_change" => {
                leaf(&["kind", "op", "percent", "window_hours"])?;
                Ok(Condition::PercentChange {
                    kind: self.kind(node)?,
                    op: self.op(node)?,
                    percent: self.number(node, "percent")?,
                    window_hours: self.positive(node, "window_hours")?,
                })
            }
            "sustained" => {
                leaf(&["kind", "op", "value", "duration_minutes"])?;
                Ok(Condition::Sustained {
                    kind: self.kind(node)?,
                    op: self.op(node)?,
                    value: self.number(node, "value")?,
                    duration_minutes: self.positive(node, "duration_minutes")?,
                })
            }
            "and" | "or" => {
                self.only_attributes(node, &[])?;
                if children.is_empty() {
                    return Err(
                        self.semantic(node, format!("<{name}> needs at least one condition"))
                    );
                }
                let parts = children
                    .iter()
                    .map(|c| self.condition(*c))
                    .collect::<Result<Vec<_>>>()?;
                Ok(if name == "and" {
                    Condition::And(parts)
                } else {
                    Condition::Or(parts)
                })
            }
            "not" => {
                self.only_attributes(node, &[])?;
                match children.as_slice() {
                    [only] => Ok(Condition::Not(Box::new(self.condition(*only)?))),
                    _ => Err(self.semantic(node, "<not> needs exactly one condition".into())),
                }
            }
            other => Err(self.semantic(node, format!("unknown element <{other}>"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(condition: &str) -> Result<RuleSet> {
        parse_rules(&format!(
            r#"<rules schema="1"><rule id="r" severity="ALARM">{condition}</rule></rules>"#
        ))
    }

    #[test]
    fn heart_rate_rule() {
        let set = parse_rules(
            r#"<rules schema="1">
                 <rule id="hr" scope="BOTH" severity="ALARM" message="HR high">
                   <threshold kind="HEART_RATE" op="gt" value="120"/>
                 </rule>
               </rules>"#,
        )
        .unwrap();
        assert_eq!(set.len(), 1);
        let r = &set.rules()[0];
        assert_eq!(r.scope, Scope::Both);
        assert_eq!(
            r.condition,
            Condition::Threshold {
                kind: MeasurementKind::HeartRate,
                op: Op::Gt,
                value: 120.0
            }
        );
    }

    #[test]
    fn empty_and_nested() {
        assert!(parse_rules("<rules/>").unwrap().is_empty());
        let set = one(
            r#"<and><not><threshold kind="SPO2" op="ge" value="90"/></not>
                    <or><sustained kind="HEART_RATE" op="gt" value="100" duration_minutes="10"/>
                        <percent_change kind="BODY_WEIGHT" op="gt" percent="2" window_hours="24"/></or></and>"#,
        )
        .unwrap();
        assert_eq!(set.rules()[0].condition.kinds().len(), 3);
    }

    #[test]
    fn rejects() {
        let unclosed =
            parse_rules("<rules>\n  <rule id=\"a\" severity=\"ALARM\">\n</rules>").unwrap_err();
        assert!(
            matches!(unclosed, Error::Parse { line: 3, .. }),
            "{unclosed}"
        );
        let e = one(r#"<threshold kind="PULSE" op="gt" value="1"/>"#).unwrap_err();
        assert!(e.to_string().contains("PULSE"));
        assert!(one(r#"<range kind="SPO2"/>"#).is_err());
        assert!(one(r#"<threshold kind="SPO2" op="ne" value="1"/>"#).is_err());
        assert!(
            one(r#"<percent_change kind="SPO2" op="gt" percent="1" window_hours="0"/>"#).is_err()
        );
        assert!(
            one(r#"<sustained kind="SPO2" op="gt" value="1" duration_minutes="-5"/>"#).is_err()
        );
        assert!(one(r#"<threshold kind="SPO2" op="gt" value="NaN"/>"#).is_err());
        assert!(one("").is_err());
        let dup = r#"<rules><rule id="a" severity="ALARM"><threshold kind="SPO2" op="lt" value="90"/></rule>
                     <rule id="a" severity="ALARM"><threshold kind="SPO2" op="lt" value="85"/></rule></rules>"#;
        assert!(
            matches!(parse_rules(dup).unwrap_err(), Error::Semantic(m) if m.contains("duplicate"))
        );
        assert!(parse_rules(r#"<rules schema="2"/>"#).is_err());
    }
}
