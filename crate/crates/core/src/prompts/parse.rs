use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::domain::{ConfidenceLevel, Label, PlanKind, SimilarityAnalysis, SimilarityDirection};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParseError {
    #[error("no JSON object found in response")]
    NoJson,

    #[error("unknown plan {0:?}")]
    UnknownPlan(String),

    #[error("missing field {0}")]
    MissingField(&'static str),

    #[error("field {field} has invalid value {value}")]
    InvalidField { field: &'static str, value: String },

    #[error("response does not start with a <<LABEL>> line")]
    MissingLabelLine,

    #[error("label line says {line} but JSON says {json}")]
    LabelMismatch { line: u8, json: u8 },
}

/// Finds the first `{...}` span that is balanced (string- and
/// escape-aware) and decodes as a JSON object.
pub fn extract_json_object(text: &str) -> Option<Map<String, Value>> {
    let bytes = text.as_bytes();
    for (start, _) in text.match_indices('{') {
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        for (off, &b) in bytes[start..].iter().enumerate() {
            if in_string {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_string = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_string = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        if let Ok(Value::Object(map)) =
                            serde_json::from_str::<Value>(&text[start..=start + off])
                        {
                            return Some(map);
                        }
                        break;
                    }
                }
                _ => {}
            }
        }
    }
    None
}

fn number_field(obj: &Map<String, Value>, key: &str) -> Option<f64> {
    match obj.get(key)? {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
    .filter(|v: &f64| v.is_finite())
}

fn clamp_unit(field: &str, value: f64) -> f64 {
    if (0.0..=1.0).contains(&value) {
        value
    } else {
        log::warn!("{field} {value} outside [0, 1]; clamping");
        value.clamp(0.0, 1.0)
    }
}

fn string_field(obj: &Map<String, Value>, key: &str) -> String {
    match obj.get(key) {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => String::new(),
        Some(other) => other.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerParse {
    pub selected_plan: PlanKind,
    pub confidence: f64,
    pub contextual_analysis: String,
    pub reasoning: String,
    pub entities: Vec<String>,
}

impl PlannerParse {
    /// Response in the planner's output format: a feature line listing the
    /// knowledge entities followed by the JSON object.
    pub fn render(&self) -> String {
        let entities = if self.entities.is_empty() {
            "none".to_owned()
        } else {
            let quoted: Vec<String> = self.entities.iter().map(|e| format!("\"{e}\"")).collect();
            format!("[{}]", quoted.join(", "))
        };
        format!(
            "6. Knowledge entities: {entities}\n{}",
            json!({
                "selected_plan": self.selected_plan.as_str(),
                "confidence": self.confidence,
                "contextual_analysis": self.contextual_analysis,
                "reasoning": self.reasoning,
            })
        )
    }
}

fn entities_from_line(text: &str) -> Option<Vec<String>> {
    let line = text
        .lines()
        .find(|l| l.to_ascii_lowercase().contains("knowledge entities"))?;
    let lower = line.to_ascii_lowercase();
    let at = lower.find("knowledge entities")? + "knowledge entities".len();
    let rest = line[at..].trim_start_matches(|c: char| c == '*' || c == ':' || c.is_whitespace());
    let rest = rest.trim().trim_start_matches('[').trim_end_matches(']');
    // Quoted items are always names; bare ones may be placeholders.
    Some(
        rest.split(',')
            .filter_map(|item| {
                let item = item.trim().trim_matches('*').trim();
                if item.len() >= 2 && item.starts_with('"') && item.ends_with('"') {
                    return Some(item[1..item.len() - 1].trim());
                }
                let e = item.trim_matches(|c: char| c == '"' || c == '\'').trim();
                let placeholder = ["none", "n/a", "na", "-", "null"].contains(&e.to_ascii_lowercase().as_str());
                (!e.is_empty() && !placeholder).then_some(e)
            })
            .filter(|e| !e.is_empty())
            .map(str::to_owned)
            .collect(),
    )
}

pub fn parse_planner(text: &str) -> Result<PlannerParse, ParseError> {
    let obj = extract_json_object(text).ok_or(ParseError::NoJson)?;
    let plan_str = match obj.get("selected_plan") {
        Some(Value::String(s)) => s.trim(),
        Some(other) => return Err(ParseError::UnknownPlan(other.to_string())),
        None => return Err(ParseError::MissingField("selected_plan")),
    };
    let selected_plan = plan_str
        .parse::<PlanKind>()
        .map_err(|_| ParseError::UnknownPlan(plan_str.to_owned()))?;
    let confidence = match number_field(&obj, "confidence") {
        Some(c) => clamp_unit("planner confidence", c),
        None => {
            log::warn!("planner response has no usable confidence; using 0");
            0.0
        }
    };
    let entities = entities_from_line(text)
        .or_else(|| {
            obj.get("entities")?.as_array().map(|a| {
                a.iter()
                    .filter_map(|v| v.as_str().map(|s| s.trim().to_owned()))
                    .filter(|s| !s.is_empty())
                    .collect()
            })
        })
        .unwrap_or_default();
    Ok(PlannerParse {
        selected_plan,
        confidence,
        contextual_analysis: string_field(&obj, "contextual_analysis"),
        reasoning: string_field(&obj, "reasoning"),
        entities,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct JudgmentParse {
    pub label: Label,
    pub confidence: f64,
    pub reasoning: String,
    /// Set when the JSON line was missing or had no usable `conf`.
    pub degraded: bool,
}

impl JudgmentParse {
    pub fn render(&self) -> String {
        format!(
            "<<LABEL>> {}\n{}",
            self.label.as_u8(),
            json!({
                "label": self.label.as_u8(),
                "conf": self.confidence,
                "reasoning": self.reasoning,
            })
        )
    }

    pub fn probability(&self) -> f64 {
        sarcasm_probability(self.label, self.confidence)
    }
}

/// Maps the judge's (label, confidence-in-label) to p(sarcastic).
pub fn sarcasm_probability(label: Label, confidence: f64) -> f64 {
    let c = confidence.clamp(0.0, 1.0);
    match label {
        Label::Sarcastic => c,
        Label::NonSarcastic => 1.0 - c,
    }
}

fn label_value(v: &Value) -> Option<u8> {
    match v {
        Value::Number(n) => match n.as_f64()? {
            0.0 => Some(0),
            1.0 => Some(1),
            _ => None,
        },
        Value::String(s) => match s.trim() {
            "0" => Some(0),
            "1" => Some(1),
            _ => None,
        },
        _ => None,
    }
}

pub fn parse_judgment(text: &str) -> Result<JudgmentParse, ParseError> {
    let trimmed = text.trim_start();
    let (first, rest) = trimmed.split_once('\n').unwrap_or((trimmed, ""));
    let after = first
        .find("<<LABEL>>")
        .map(|i| first[i + "<<LABEL>>".len()..].trim_start())
        .ok_or(ParseError::MissingLabelLine)?;
    let line_label = match after.chars().next() {
        Some('0') => Label::NonSarcastic,
        Some('1') => Label::Sarcastic,
        _ => return Err(ParseError::MissingLabelLine),
    };

    let Some(obj) = extract_json_object(rest) else {
        return Ok(JudgmentParse {
            label: line_label,
            confidence: 0.5,
            reasoning: String::new(),
            degraded: true,
        });
    };
    if let Some(v) = obj.get("label") {
        let json_label = label_value(v).ok_or_else(|| ParseError::InvalidField {
            field: "label",
            value: v.to_string(),
        })?;
        if json_label != line_label.as_u8() {
            return Err(ParseError::LabelMismatch {
                line: line_label.as_u8(),
                json: json_label,
            });
        }
    }
    let (confidence, degraded) = match number_field(&obj, "conf") {
        Some(c) => (clamp_unit("judgment conf", c), false),
        None => (0.5, true),
    };
    Ok(JudgmentParse {
        label: line_label,
        confidence,
        reasoning: string_field(&obj, "reasoning"),
        degraded,
    })
}

fn field_after<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().find_map(|l| {
        let lower = l.to_ascii_lowercase();
        let i = lower.find(key)?;
        Some(l[i + key.len()..].trim_start_matches(|c: char| c == '*' || c == ':' || c.is_whitespace()))
    })
}

/// Reads the structured fields out of a similarity analysis. A field that
/// names more than one option, or none, is left absent.
pub fn parse_similarity(text: &str) -> SimilarityAnalysis {
    let direction = field_after(text, "primary similarity direction").and_then(|v| {
        let v = v.to_ascii_lowercase();
        let non = v.contains("non-sarcastic") || v.contains("non_sarcastic") || v.contains("non sarcastic");
        let sarc = v.replace("non-sarcastic", "").replace("non_sarcastic", "").replace("non sarcastic", "").contains("sarcastic");
        let mixed = v.contains("mixed");
        match (sarc, non, mixed) {
            (true, false, false) => Some(SimilarityDirection::Sarcastic),
            (false, true, false) => Some(SimilarityDirection::NonSarcastic),
            (false, false, true) => Some(SimilarityDirection::Mixed),
            _ => None,
        }
    });
    let confidence_level = field_after(text, "confidence level").and_then(|v| {
        let v = v.to_ascii_lowercase();
        let hits: Vec<ConfidenceLevel> = [
            ("high", ConfidenceLevel::High),
            ("medium", ConfidenceLevel::Medium),
            ("low", ConfidenceLevel::Low),
        ]
        .into_iter()
        .filter(|(w, _)| v.contains(w))
        .map(|(_, l)| l)
        .collect();
        (hits.len() == 1).then(|| hits[0])
    });
    let candidate_type = field_after(text, "candidate sarcasm type").and_then(|v| {
        let hits: Vec<PlanKind> = PlanKind::ALL
            .into_iter()
            .filter(|p| v.contains(p.as_str()))
            .collect();
        (hits.len() == 1).then(|| hits[0])
    });
    SimilarityAnalysis {
        raw_text: text.to_owned(),
        primary_direction: direction,
        confidence_level,
        candidate_type,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn planner_direct_parse() {
        let p = parse_planner(
            r#"{"selected_plan":"simple_irony","confidence":0.9,"contextual_analysis":"c","reasoning":"r"}"#,
        )
        .unwrap();
        assert_eq!(p.selected_plan, PlanKind::SimpleIrony);
        assert_eq!(p.confidence, 0.9);
        assert_eq!(p.contextual_analysis, "c");
        assert_eq!(p.reasoning, "r");
        assert!(p.entities.is_empty());
    }

    #[test]
    fn planner_unknown_plan() {
        assert_eq!(
            parse_planner(r#"{"selected_plan":"banana"}"#),
            Err(ParseError::UnknownPlan("banana".into()))
        );
        assert_eq!(parse_planner("no json at all"), Err(ParseError::NoJson));
        assert_eq!(parse_planner(r#"{"confidence": 1}"#), Err(ParseError::MissingField("selected_plan")));
    }

    #[test]
    fn planner_confidence_clamped() {
        let p = parse_planner(r#"{"selected_plan":"simple_irony","confidence":1.7,"contextual_analysis":"c"}"#)
            .unwrap();
        assert_eq!(p.confidence, 1.0);
        let p = parse_planner(r#"{"selected_plan":"simple_irony","confidence":"0.25"}"#).unwrap();
        assert_eq!(p.confidence, 0.25);
    }

    #[test]
    fn planner_entities_line_then_json_field() {
        let text = "5. Rhetorical devices: irony\n6. Knowledge entities: [NASA, \"Obama\", Roe v. Wade]\n{\"selected_plan\":\"knowledge_dependent\",\"confidence\":0.8,\"entities\":[\"x\"]}";
        assert_eq!(parse_planner(text).unwrap().entities, vec!["NASA", "Obama", "Roe v. Wade"]);
        let text = "{\"selected_plan\":\"knowledge_dependent\",\"entities\":[\"x\", \" \"]}";
        assert_eq!(parse_planner(text).unwrap().entities, vec!["x"]);
        let text = "- **Knowledge entities:** none\n{\"selected_plan\":\"simple_irony\"}";
        assert!(parse_planner(text).unwrap().entities.is_empty());
        let text = "6. Knowledge entities: [\"NA\", N/A, \"None\"]\n{\"selected_plan\":\"simple_irony\"}";
        assert_eq!(parse_planner(text).unwrap().entities, vec!["NA", "None"]);
    }

    /// Fifty wrapped variants of known planner objects; expected parses are
    /// the objects themselves.
    #[test]
    fn planner_wrapped_variants() {
        let bases = [
            (PlanKind::ExpectationViolation, 0.72, "user praises a delay", "contrast"),
            (PlanKind::KnowledgeDependent, 0.9, "refers to a {public} figure", "entities"),
            (PlanKind::SimpleIrony, 0.55, "short \"quip\"", "overt"),
            (PlanKind::ExpectationViolation, 0.0, "c", ""),
            (PlanKind::SimpleIrony, 1.0, "multi\nline", "r\\n"),
        ];
        let prefixes = [
            "",
            "Here is my analysis.\n",
            "```json\n",
            "Feature {notes}: none\n",
            "Output: ",
            "{not json} then ",
            "**Output:**\n\n",
            "} stray close brace\n",
            "Plan selection follows.\r\n",
            "Analysis with a quote \" mark\n",
        ];
        let suffixes = ["", "\n```", "\nThat is all.", " {\"selected_plan\":\"banana\"}", "\n}"];
        let mut n = 0;
        for (plan, conf, ctx, why) in bases {
            let obj = json!({
                "selected_plan": plan.as_str(),
                "confidence": conf,
                "contextual_analysis": ctx,
                "reasoning": why,
            });
            for (i, pre) in prefixes.iter().enumerate() {
                let suf = suffixes[i % suffixes.len()];
                let text = format!("{pre}{obj}{suf}");
                let p = parse_planner(&text).unwrap_or_else(|e| panic!("{text:?}: {e}"));
                assert_eq!(p.selected_plan, plan, "{text:?}");
                assert_eq!(p.confidence, conf);
                assert_eq!(p.contextual_analysis, ctx);
                assert_eq!(p.reasoning, why);
                n += 1;
            }
        }
        assert_eq!(n, 50);
    }

    #[test]
    fn judgment_examples() {
        let j = parse_judgment("<<LABEL>> 1\n{\"label\":1,\"conf\":0.85,\"reasoning\":\"...\"}").unwrap();
        assert_eq!((j.label, j.confidence, j.degraded), (Label::Sarcastic, 0.85, false));
        assert_eq!(j.probability(), 0.85);

        assert_eq!(
            parse_judgment("<<LABEL>> 0\n{\"label\":1,\"conf\":0.7}"),
            Err(ParseError::LabelMismatch { line: 0, json: 1 })
        );

        let j = parse_judgment("<<LABEL>> 0").unwrap();
        assert_eq!((j.label, j.confidence, j.degraded), (Label::NonSarcastic, 0.5, true));
    }

    #[test]
    fn judgment_label_only_json_variants() {
        let j = parse_judgment("Line 1: <<LABEL>> 1 (sarcastic)\nLine 2: JSON {\"label\": \"1\", \"conf\": 0.6}").unwrap();
        assert_eq!(j.label, Label::Sarcastic);
        assert_eq!(j.confidence, 0.6);
        assert!(parse_judgment("\n\n<<LABEL>> 1\n{\"conf\":0.9}").unwrap().label.is_sarcastic());
        assert_eq!(parse_judgment("sarcastic, 0.9"), Err(ParseError::MissingLabelLine));
        assert_eq!(parse_judgment("<<LABEL>> maybe"), Err(ParseError::MissingLabelLine));
        assert!(matches!(
            parse_judgment("<<LABEL>> 1\n{\"label\": 2}"),
            Err(ParseError::InvalidField { .. })
        ));
        assert!(parse_judgment("<<LABEL>> 1\n{\"label\": 1}").unwrap().degraded);
    }

    #[test]
    fn probability_mapping() {
        assert_eq!(sarcasm_probability(Label::Sarcastic, 0.85), 0.85);
        assert!((sarcasm_probability(Label::NonSarcastic, 0.9) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn similarity_fields() {
        let s = parse_similarity(
            "- Primary similarity direction: more similar to non-sarcastic\n- Confidence level: High\n- Candidate sarcasm type if sarcastic: simple_irony",
        );
        assert_eq!(s.primary_direction, Some(SimilarityDirection::NonSarcastic));
        assert_eq!(s.confidence_level, Some(ConfidenceLevel::High));
        assert_eq!(s.candidate_type, Some(PlanKind::SimpleIrony));

        let s = parse_similarity("**Primary similarity direction:** sarcastic");
        assert_eq!(s.primary_direction, Some(SimilarityDirection::Sarcastic));

        // an echoed option list is ambiguous, so absent
        let s = parse_similarity(
            "- Primary similarity direction: [more similar to sarcastic/non-sarcastic/mixed]\n- Confidence level: [high/medium/low]",
        );
        assert_eq!(s.primary_direction, None);
        assert_eq!(s.confidence_level, None);
        assert_eq!(parse_similarity("free prose").candidate_type, None);
    }

    fn plan_strategy() -> impl Strategy<Value = PlanKind> {
        prop_oneof![
            Just(PlanKind::ExpectationViolation),
            Just(PlanKind::KnowledgeDependent),
            Just(PlanKind::SimpleIrony)
        ]
    }

    proptest! {
        #[test]
        fn parsers_never_panic(s in "\\PC*") {
            let _ = parse_planner(&s);
            let _ = parse_judgment(&s);
            let _ = parse_similarity(&s);
        }

        #[test]
        fn planner_render_round_trip(
            plan in plan_strategy(),
            conf in 0.0f64..=1.0,
            ctx in "[^\\n]{1,40}",
            why in "\\PC{0,40}",
            entities in proptest::collection::vec("[A-Za-z][A-Za-z .]{0,10}[A-Za-z]", 0..5),
        ) {
            let p = PlannerParse {
                selected_plan: plan,
                confidence: conf,
                contextual_analysis: ctx,
                reasoning: why,
                entities,
            };
            prop_assert_eq!(parse_planner(&p.render()).unwrap(), p);
        }

        #[test]
        fn judgment_render_round_trip(sarc in any::<bool>(), conf in 0.0f64..=1.0, why in "\\PC{0,60}") {
            let j = JudgmentParse {
                label: if sarc { Label::Sarcastic } else { Label::NonSarcastic },
                confidence: conf,
                reasoning: why,
                degraded: false,
            };
            prop_assert_eq!(parse_judgment(&j.render()).unwrap(), j);
        }
    }
}
