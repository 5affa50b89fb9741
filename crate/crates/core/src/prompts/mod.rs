//! Prompt templates and parsers for structured model output.
//!
//! The ten templates live as text assets under `prompts/` with a
//! `MANIFEST` of sha256 checksums (`sha256sum` format). Placeholders are
//! written `{name}` with `name` an identifier; any other brace, such as the
//! literal JSON in the planner and integrator output specs, is left alone.

mod parse;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use parse::{
    extract_json_object, parse_judgment, parse_planner, parse_similarity, sarcasm_probability,
    JudgmentParse, ParseError, PlannerParse,
};

#[derive(Debug, Error, PartialEq)]
pub enum TemplateError {
    #[error("template {template} needs a binding for {{{placeholder}}}")]
    MissingBinding {
        template: TemplateName,
        placeholder: String,
    },

    #[error("template asset {0} is missing")]
    MissingAsset(String),

    #[error("template {0} does not match its MANIFEST checksum")]
    ChecksumMismatch(String),

    #[error("cannot read template assets: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateName {
    Rationale,
    SimilarityAnalyzer,
    MetaPlanner,
    SemanticAgent,
    ExpectationAgent,
    KnowledgeAgent,
    AlignmentAgent,
    IncongruityAgent,
    RhetoricAgent,
    Integrator,
}

impl TemplateName {
    pub const ALL: [TemplateName; 10] = [
        TemplateName::Rationale,
        TemplateName::SimilarityAnalyzer,
        TemplateName::MetaPlanner,
        TemplateName::SemanticAgent,
        TemplateName::ExpectationAgent,
        TemplateName::KnowledgeAgent,
        TemplateName::AlignmentAgent,
        TemplateName::IncongruityAgent,
        TemplateName::RhetoricAgent,
        TemplateName::Integrator,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            TemplateName::Rationale => "rationale.txt",
            TemplateName::SimilarityAnalyzer => "similarity_analyzer.txt",
            TemplateName::MetaPlanner => "meta_planner.txt",
            TemplateName::SemanticAgent => "semantic_agent.txt",
            TemplateName::ExpectationAgent => "expectation_agent.txt",
            TemplateName::KnowledgeAgent => "knowledge_agent.txt",
            TemplateName::AlignmentAgent => "alignment_agent.txt",
            TemplateName::IncongruityAgent => "incongruity_agent.txt",
            TemplateName::RhetoricAgent => "rhetoric_agent.txt",
            TemplateName::Integrator => "integrator.txt",
        }
    }

    fn builtin_body(self) -> &'static str {
        match self {
            TemplateName::Rationale => include_str!("../../prompts/rationale.txt"),
            TemplateName::SimilarityAnalyzer => include_str!("../../prompts/similarity_analyzer.txt"),
            TemplateName::MetaPlanner => include_str!("../../prompts/meta_planner.txt"),
            TemplateName::SemanticAgent => include_str!("../../prompts/semantic_agent.txt"),
            TemplateName::ExpectationAgent => include_str!("../../prompts/expectation_agent.txt"),
            TemplateName::KnowledgeAgent => include_str!("../../prompts/knowledge_agent.txt"),
            TemplateName::AlignmentAgent => include_str!("../../prompts/alignment_agent.txt"),
            TemplateName::IncongruityAgent => include_str!("../../prompts/incongruity_agent.txt"),
            TemplateName::RhetoricAgent => include_str!("../../prompts/rhetoric_agent.txt"),
            TemplateName::Integrator => include_str!("../../prompts/integrator.txt"),
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_name().trim_end_matches(".txt"))
    }
}

/// Placeholders that render as empty text when no binding is given.
const OPTIONAL_PLACEHOLDERS: [&str; 2] = ["context", "context_if_available"];

pub const BUILTIN_MANIFEST: &str = include_str!("../../prompts/MANIFEST");

pub type Bindings<'a> = HashMap<&'a str, String>;

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    name: TemplateName,
    body: String,
    placeholders: BTreeSet<String>,
}

/// A piece of a template body: literal text or a placeholder name.
enum Segment<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn segments(body: &str) -> Vec<Segment<'_>> {
    let bytes = body.as_bytes();
    let mut out = Vec::new();
    let mut literal_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let name_len = bytes[i + 1..]
                .iter()
                .take_while(|b| b.is_ascii_alphanumeric() || **b == b'_')
                .count();
            let close = i + 1 + name_len;
            if name_len > 0
                && !bytes[i + 1].is_ascii_digit()
                && bytes.get(close) == Some(&b'}')
            {
                out.push(Segment::Text(&body[literal_start..i]));
                out.push(Segment::Slot(&body[i + 1..close]));
                i = close + 1;
                literal_start = i;
                continue;
            }
        }
        i += 1;
    }
    out.push(Segment::Text(&body[literal_start..]));
    out
}

impl PromptTemplate {
    pub fn new(name: TemplateName, body: impl Into<String>) -> Self {
        let body = body.into();
        let placeholders = segments(&body)
            .into_iter()
            .filter_map(|s| match s {
                Segment::Slot(n) => Some(n.to_owned()),
                Segment::Text(_) => None,
            })
            .collect();
        Self {
            name,
            body,
            placeholders,
        }
    }

    pub fn name(&self) -> TemplateName {
        self.name
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn placeholders(&self) -> &BTreeSet<String> {
        &self.placeholders
    }

    pub fn required_placeholders(&self) -> BTreeSet<&str> {
        self.placeholders
            .iter()
            .map(String::as_str)
            .filter(|p| !OPTIONAL_PLACEHOLDERS.contains(p))
            .collect()
    }

    /// Substitutes every placeholder in one pass; bound values are inserted
    /// verbatim and never re-scanned.
    pub fn render(&self, bindings: &Bindings<'_>) -> Result<String, TemplateError> {
        for key in bindings.keys() {
            if !self.placeholders.contains(*key) {
                log::warn!("template {} has no placeholder {{{key}}}; binding ignored", self.name);
            }
        }
        let mut out = String::with_capacity(self.body.len() + 256);
        for seg in segments(&self.body) {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(name) => match bindings.get(name) {
                    Some(v) => out.push_str(v),
                    None if OPTIONAL_PLACEHOLDERS.contains(&name) => {}
                    None => {
                        return Err(TemplateError::MissingBinding {
                            template: self.name,
                            placeholder: name.to_owned(),
                        })
                    }
                },
            }
        }
        Ok(out)
    }

    pub fn sha256_hex(&self) -> String {
        hex::encode(Sha256::digest(self.body.as_bytes()))
    }
}

/// Parses `sha256sum`-style lines into (file name, hex digest).
fn parse_manifest(text: &str) -> HashMap<String, String> {
    text.lines()
        .filter_map(|l| {
            let (hash, file) = l.trim().split_once(char::is_whitespace)?;
            Some((file.trim().trim_start_matches('*').to_owned(), hash.to_ascii_lowercase()))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: HashMap<TemplateName, PromptTemplate>,
}

impl TemplateSet {
    /// The templates compiled into the binary, verified against the
    /// compiled-in MANIFEST.
    pub fn builtin() -> Result<Self, TemplateError> {
        Self::from_sources(BUILTIN_MANIFEST, |name| Ok(name.builtin_body().to_owned()))
    }

    /// Loads `<dir>/<name>.txt` for every template and checks each against
    /// `<dir>/MANIFEST`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let dir = dir.as_ref();
        let manifest = std::fs::read_to_string(dir.join("MANIFEST"))
            .map_err(|e| TemplateError::Io(format!("{}: {e}", dir.join("MANIFEST").display())))?;
        Self::from_sources(&manifest, |name| {
            std::fs::read_to_string(dir.join(name.file_name()))
                .map_err(|_| TemplateError::MissingAsset(name.file_name().to_owned()))
        })
    }

    fn from_sources(
        manifest: &str,
        mut load: impl FnMut(TemplateName) -> Result<String, TemplateError>,
    ) -> Result<Self, TemplateError> {
        let sums = parse_manifest(manifest);
        let mut templates = HashMap::new();
        for name in TemplateName::ALL {
            let t = PromptTemplate::new(name, load(name)?);
            let expected = sums
                .get(name.file_name())
                .ok_or_else(|| TemplateError::MissingAsset(format!("MANIFEST entry for {}", name.file_name())))?;
            if &t.sha256_hex() != expected {
                return Err(TemplateError::ChecksumMismatch(name.file_name().to_owned()));
            }
            templates.insert(name, t);
        }
        Ok(Self { templates })
    }

    pub fn get(&self, name: TemplateName) -> &PromptTemplate {
        &self.templates[&name]
    }

    pub fn render(&self, name: TemplateName, bindings: &Bindings<'_>) -> Result<String, TemplateError> {
        self.get(name).render(bindings)
    }
}
