//! JSONL corpus and dataset reader.
//!
//! One object per line: `{"id": string?, "text": string, "label": 0|1,
//! "context": string?}`. Blank lines are skipped; unknown keys ignored.
//! Every malformed line is reported, not just the first.

use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde_json::Value;

use crate::domain::{Label, Sample};

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRow {
    pub id: Option<String>,
    pub text: String,
    pub label: Option<Label>,
    pub context: Option<String>,
}

impl CorpusRow {
    /// Id from the file, else derived from the 0-based row index.
    pub fn id_or_index(&self, index: usize) -> String {
        self.id.clone().unwrap_or_else(|| row_id(index))
    }

    pub fn into_sample(self, index: usize) -> Sample {
        let id = self.id_or_index(index);
        Sample::new(id, self.text, self.context, self.label)
            .expect("rows are validated at parse time")
    }
}

/// Zero-padded so lexical order matches row order.
pub fn row_id(index: usize) -> String {
    format!("row-{index:06}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusError {
    pub errors: Vec<LineError>,
}

impl fmt::Display for CorpusError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} malformed line(s)", self.errors.len())?;
        for e in &self.errors {
            write!(f, "\n  line {}: {}", e.line, e.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for CorpusError {}

fn parse_line(raw: &str, require_label: bool) -> Result<CorpusRow, String> {
    let value: Value = serde_json::from_str(raw).map_err(|e| format!("invalid JSON: {e}"))?;
    let obj = value.as_object().ok_or("expected a JSON object")?;

    let text = match obj.get("text") {
        Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
        Some(Value::String(_)) => return Err("text is empty".into()),
        Some(_) => return Err("text must be a string".into()),
        None => return Err("missing text".into()),
    };
    let label = match obj.get("label") {
        None | Some(Value::Null) if !require_label => None,
        None | Some(Value::Null) => return Err("missing label".into()),
        Some(v) => Some(
            v.as_i64()
                .and_then(Label::from_int)
                .ok_or_else(|| format!("label must be 0 or 1, got {v}"))?,
        ),
    };
    let id = match obj.get("id") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(Value::Number(n)) => Some(n.to_string()),
        Some(_) => return Err("id must be a string".into()),
    };
    let context = match obj.get("context") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if s.trim().is_empty() => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err("context must be a string".into()),
    };
    Ok(CorpusRow {
        id,
        text,
        label,
        context,
    })
}

pub fn parse_jsonl(reader: impl BufRead, require_label: bool) -> Result<Vec<CorpusRow>, CorpusError> {
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                errors.push(LineError {
                    line: line_no,
                    message: e.to_string(),
                });
                continue;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line, require_label) {
            Ok(row) => rows.push(row),
            Err(message) => errors.push(LineError {
                line: line_no,
                message,
            }),
        }
    }
    if errors.is_empty() {
        Ok(rows)
    } else {
        Err(CorpusError { errors })
    }
}

pub fn read_jsonl(path: impl AsRef<Path>, require_label: bool) -> crate::Result<Vec<CorpusRow>> {
    let file = std::fs::File::open(path.as_ref())?;
    Ok(parse_jsonl(std::io::BufReader::new(file), require_label)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_valid_rows() {
        let src = r#"{"id":"a","text":"yeah right","label":1,"context":"ctx"}

{"text":"plain","label":0,"extra":true}
"#;
        let rows = parse_jsonl(src.as_bytes(), true).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].id.as_deref(), Some("a"));
        assert_eq!(rows[0].context.as_deref(), Some("ctx"));
        assert_eq!(rows[1].label, Some(Label::NonSarcastic));
        assert_eq!(rows[1].id_or_index(1), "row-000001");
    }

    #[test]
    fn reports_every_bad_line_with_numbers() {
        let src = "{\"text\":\"ok\",\"label\":1}\n{\"text\":\"x\",\"label\":2}\n{\"label\":0}\nnot json\n{\"text\":\"y\",\"label\":1.5}\n";
        let err = parse_jsonl(src.as_bytes(), true).unwrap_err();
        let lines: Vec<usize> = err.errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 3, 4, 5]);
        assert!(err.errors[0].message.contains("0 or 1"));
        assert!(err.errors[1].message.contains("missing text"));
    }

    #[test]
    fn label_optional_when_not_required() {
        let rows = parse_jsonl("{\"text\":\"hi\"}".as_bytes(), false).unwrap();
        assert_eq!(rows[0].label, None);
        assert!(parse_jsonl("{\"text\":\"hi\"}".as_bytes(), true).is_err());
        // a present but invalid label is rejected either way
        assert!(parse_jsonl("{\"text\":\"hi\",\"label\":3}".as_bytes(), false).is_err());
    }

    #[test]
    fn blank_text_rejected() {
        assert!(parse_jsonl("{\"text\":\"   \",\"label\":0}".as_bytes(), true).is_err());
    }
}
