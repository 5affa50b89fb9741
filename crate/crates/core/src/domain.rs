//! Pipeline value types and the plan/agent taxonomy.
//!
//! Everything here is plain data: no I/O and no model calls. Types with
//! cross-field invariants (`PlanDecision`, `ReasoningTrace`) keep their
//! fields private and validate in their constructors.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Binary sarcasm label. Serialized as the integers `0` and `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    NonSarcastic,
    Sarcastic,
}

impl Label {
    pub fn from_int(value: i64) -> Option<Self> {
        match value {
            0 => Some(Label::NonSarcastic),
            1 => Some(Label::Sarcastic),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Label::NonSarcastic => 0,
            Label::Sarcastic => 1,
        }
    }

    /// Human-readable name used when rendering prompts.
    pub fn word(self) -> &'static str {
        match self {
            Label::NonSarcastic => "non-sarcastic",
            Label::Sarcastic => "sarcastic",
        }
    }

    pub fn is_sarcastic(self) -> bool {
        self == Label::Sarcastic
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let value = i64::deserialize(deserializer)?;
        Label::from_int(value)
            .ok_or_else(|| serde::de::Error::custom(format!("label must be 0 or 1, got {value}")))
    }
}

/// One classification input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<Label>,
}

impl Sample {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        context: Option<String>,
        gold_label: Option<Label>,
    ) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::InvalidInput("sample text is empty".into()));
        }
        // Blank context is treated as no context.
        let context = context.filter(|c| !c.trim().is_empty());
        Ok(Self {
            id: id.into(),
            text,
            context,
            gold_label,
        })
    }

    /// Whitespace-delimited token count of the raw text.
    pub fn word_count(&self) -> usize {
        word_count(&self.text)
    }
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// A labeled knowledge-base entry with its unit-normalized embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Exemplar {
    pub id: String,
    pub text: String,
    pub label: Label,
    pub embedding: Vec<f32>,
}

/// An exemplar paired with its similarity to a query. Output of retrieval,
/// before rationales exist.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredExemplar {
    pub exemplar: Arc<Exemplar>,
    pub similarity: f64,
}

/// A retrieved exemplar enriched with its generated rationale.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedExemplar {
    pub exemplar: Arc<Exemplar>,
    pub rationale: String,
    pub similarity: f64,
}

impl AugmentedExemplar {
    pub fn new(scored: ScoredExemplar, rationale: impl Into<String>) -> Result<Self> {
        let rationale = rationale.into();
        if rationale.trim().is_empty() {
            return Err(Error::InvalidInput(format!(
                "empty rationale for exemplar {}",
                scored.exemplar.id
            )));
        }
        if !(-1.0..=1.0).contains(&scored.similarity) {
            return Err(Error::InvalidInput(format!(
                "similarity {} outside [-1, 1]",
                scored.similarity
            )));
        }
        Ok(Self {
            exemplar: scored.exemplar,
            rationale,
            similarity: scored.similarity,
        })
    }
}

/// The balanced retrieved set: top-k per label partition, each list sorted
/// by similarity descending.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedContext<T = AugmentedExemplar> {
    pub sarcastic: Vec<T>,
    pub non_sarcastic: Vec<T>,
    pub k: usize,
    /// Set when one partition came back empty or the two sides differ in size.
    pub degraded: bool,
}

impl<T> RetrievedContext<T> {
    pub fn len(&self) -> usize {
        self.sarcastic.len() + self.non_sarcastic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sarcastic entries first, then non-sarcastic.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.sarcastic.iter().chain(self.non_sarcastic.iter())
    }

    pub fn map<U>(self, mut f: impl FnMut(T) -> U) -> RetrievedContext<U> {
        RetrievedContext {
            sarcastic: self.sarcastic.into_iter().map(&mut f).collect(),
            non_sarcastic: self.non_sarcastic.into_iter().map(&mut f).collect(),
            k: self.k,
            degraded: self.degraded,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityDirection {
    Sarcastic,
    NonSarcastic,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceLevel {
    High,
    Medium,
    Low,
}

/// Output of the similarity analyzer. Structured fields are `None` when
/// the raw text did not state them unambiguously.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityAnalysis {
    pub raw_text: String,
    pub primary_direction: Option<SimilarityDirection>,
    pub confidence_level: Option<ConfidenceLevel>,
    pub candidate_type: Option<PlanKind>,
}

/// The three reasoning plans the meta-planner chooses between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    ExpectationViolation,
    KnowledgeDependent,
    SimpleIrony,
}

impl PlanKind {
    pub const ALL: [PlanKind; 3] = [
        PlanKind::ExpectationViolation,
        PlanKind::KnowledgeDependent,
        PlanKind::SimpleIrony,
    ];

    /// The wire name used in planner JSON.
    pub fn as_str(self) -> &'static str {
        match self {
            PlanKind::ExpectationViolation => "expectation_violation",
            PlanKind::KnowledgeDependent => "knowledge_dependent",
            PlanKind::SimpleIrony => "simple_irony",
        }
    }
}

impl fmt::Display for PlanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlanKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expectation_violation" => Ok(PlanKind::ExpectationViolation),
            "knowledge_dependent" => Ok(PlanKind::KnowledgeDependent),
            "simple_irony" => Ok(PlanKind::SimpleIrony),
            other => Err(Error::InvalidInput(format!("unknown plan {other:?}"))),
        }
    }
}

/// The six specialist agents. Declaration order is the canonical trace
/// order: every agent appears after the agents whose output it consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Semantic,
    Knowledge,
    Expectation,
    Alignment,
    Incongruity,
    Rhetoric,
}

impl AgentKind {
    pub const CANONICAL_ORDER: [AgentKind; 6] = [
        AgentKind::Semantic,
        AgentKind::Knowledge,
        AgentKind::Expectation,
        AgentKind::Alignment,
        AgentKind::Incongruity,
        AgentKind::Rhetoric,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Semantic => "semantic",
            AgentKind::Knowledge => "knowledge",
            AgentKind::Expectation => "expectation",
            AgentKind::Alignment => "alignment",
            AgentKind::Incongruity => "incongruity",
            AgentKind::Rhetoric => "rhetoric",
        }
    }

    /// Agents whose output this agent's prompt consumes.
    pub fn upstream(self) -> &'static [AgentKind] {
        match self {
            AgentKind::Expectation => &[AgentKind::Semantic],
            AgentKind::Alignment => &[AgentKind::Semantic, AgentKind::Knowledge],
            AgentKind::Incongruity => &[AgentKind::Expectation],
            AgentKind::Semantic | AgentKind::Knowledge | AgentKind::Rhetoric => &[],
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentKind::CANONICAL_ORDER
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown agent {s:?}")))
    }
}

/// Agent ensemble mandated by a plan. `ambiguous` only widens
/// `SimpleIrony`, adding the semantic and incongruity support agents.
pub fn ensemble_for(plan: PlanKind, ambiguous: bool) -> BTreeSet<AgentKind> {
    use AgentKind::*;
    match plan {
        PlanKind::ExpectationViolation => [Semantic, Expectation, Incongruity, Rhetoric].into(),
        PlanKind::KnowledgeDependent => [Semantic, Knowledge, Alignment, Rhetoric].into(),
        PlanKind::SimpleIrony if ambiguous => [Rhetoric, Semantic, Incongruity].into(),
        PlanKind::SimpleIrony => [Rhetoric].into(),
    }
}

/// Threshold a sarcasm probability at 0.5. Exactly 0.5 is sarcastic.
pub fn apply_threshold(probability: f64) -> Result<Label> {
    if !(0.0..=1.0).contains(&probability) {
        return Err(Error::InvalidInput(format!(
            "probability {probability} outside [0, 1]"
        )));
    }
    Ok(if probability >= 0.5 {
        Label::Sarcastic
    } else {
        Label::NonSarcastic
    })
}

/// The meta-planner's validated decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDecision {
    plan: PlanKind,
    confidence: f64,
    contextual_analysis: String,
    reasoning: String,
    llm_selected_plan: PlanKind,
    entities: Vec<String>,
}

impl PlanDecision {
    pub fn new(
        plan: PlanKind,
        confidence: f64,
        contextual_analysis: impl Into<String>,
        reasoning: impl Into<String>,
        llm_selected_plan: PlanKind,
        entities: Vec<String>,
    ) -> Result<Self> {
        let contextual_analysis = contextual_analysis.into();
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidInput(format!(
                "plan confidence {confidence} outside [0, 1]"
            )));
        }
        if contextual_analysis.trim().is_empty() {
            return Err(Error::InvalidInput("contextual analysis is empty".into()));
        }
        Ok(Self {
            plan,
            confidence,
            contextual_analysis,
            reasoning: reasoning.into(),
            llm_selected_plan,
            entities,
        })
    }

    pub fn plan(&self) -> PlanKind {
        self.plan
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn contextual_analysis(&self) -> &str {
        &self.contextual_analysis
    }

    pub fn reasoning(&self) -> &str {
        &self.reasoning
    }

    pub fn llm_selected_plan(&self) -> PlanKind {
        self.llm_selected_plan
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    /// True when rule validation replaced the planner's own choice.
    pub fn overridden(&self) -> bool {
        self.plan != self.llm_selected_plan
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOutput {
    pub agent: AgentKind,
    pub content: String,
    pub elapsed_ms: f64,
}

/// Agent outputs for one sample in canonical order, with the Stage 1 and
/// Stage 2 artifacts they were conditioned on.
#[derive(Debug, Clone, PartialEq)]
pub struct ReasoningTrace {
    outputs: Vec<AgentOutput>,
    similarity_analysis: SimilarityAnalysis,
    plan_decision: PlanDecision,
    ambiguous: bool,
}

impl ReasoningTrace {
    /// Validates that `outputs` covers exactly the ensemble for the plan,
    /// without duplicates, and sorts them into canonical order.
    pub fn new(
        mut outputs: Vec<AgentOutput>,
        similarity_analysis: SimilarityAnalysis,
        plan_decision: PlanDecision,
        ambiguous: bool,
    ) -> Result<Self> {
        let expected = ensemble_for(plan_decision.plan(), ambiguous);
        let mut seen = BTreeSet::new();
        for out in &outputs {
            if !seen.insert(out.agent) {
                return Err(Error::InvalidInput(format!("duplicate agent {}", out.agent)));
            }
            if !expected.contains(&out.agent) {
                return Err(Error::InvalidInput(format!(
                    "agent {} is not in the {} ensemble",
                    out.agent,
                    plan_decision.plan()
                )));
            }
            if out.content.is_empty() || out.elapsed_ms < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "agent {} produced an invalid output",
                    out.agent
                )));
            }
        }
        if seen != expected {
            return Err(Error::InvalidInput(format!(
                "trace agents {:?} do not match ensemble {:?}",
                seen, expected
            )));
        }
        outputs.sort_by_key(|o| o.agent);
        Ok(Self {
            outputs,
            similarity_analysis,
            plan_decision,
            ambiguous,
        })
    }

    pub fn outputs(&self) -> &[AgentOutput] {
        &self.outputs
    }

    pub fn similarity_analysis(&self) -> &SimilarityAnalysis {
        &self.similarity_analysis
    }

    pub fn plan_decision(&self) -> &PlanDecision {
        &self.plan_decision
    }

    pub fn ambiguous(&self) -> bool {
        self.ambiguous
    }

    pub fn agents(&self) -> BTreeSet<AgentKind> {
        self.outputs.iter().map(|o| o.agent).collect()
    }
}

/// Per-stage wall (or simulated) time in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub retrieval_ms: f64,
    pub planning_ms: f64,
    pub agents_ms: f64,
    pub synthesis_ms: f64,
    pub total_ms: f64,
}

impl StageTimings {
    pub fn from_stages(retrieval_ms: f64, planning_ms: f64, agents_ms: f64, synthesis_ms: f64) -> Self {
        Self {
            retrieval_ms,
            planning_ms,
            agents_ms,
            synthesis_ms,
            total_ms: retrieval_ms + planning_ms + agents_ms + synthesis_ms,
        }
    }

    pub fn stages(&self) -> [f64; 4] {
        [
            self.retrieval_ms,
            self.planning_ms,
            self.agents_ms,
            self.synthesis_ms,
        ]
    }
}

/// Non-fatal fallbacks recorded on a verdict.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Flag {
    DegradedRetrieval,
    RationaleUnavailable(String),
    SimilarityUnparsed,
    PlannerParseFailed,
    SiLengthGuidelineExceeded,
    AgentFailed(AgentKind),
    JudgmentDegraded,
    JudgmentParseFailed,
    ThresholdDisagreesWithStatedLabel,
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Flag::DegradedRetrieval => f.write_str("degraded_retrieval"),
            Flag::RationaleUnavailable(id) => write!(f, "rationale_unavailable:{id}"),
            Flag::SimilarityUnparsed => f.write_str("similarity_unparsed"),
            Flag::PlannerParseFailed => f.write_str("planner_parse_failed"),
            Flag::SiLengthGuidelineExceeded => f.write_str("si_length_guideline_exceeded"),
            Flag::AgentFailed(a) => write!(f, "agent_failed:{a}"),
            Flag::JudgmentDegraded => f.write_str("judgment_degraded"),
            Flag::JudgmentParseFailed => f.write_str("judgment_parse_failed"),
            Flag::ThresholdDisagreesWithStatedLabel => {
                f.write_str("threshold_disagrees_with_stated_label")
            }
        }
    }
}

impl Serialize for Flag {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// The final output for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub sample_id: String,
    pub label: Label,
    pub probability: f64,
    pub explanation: String,
    pub trace: ReasoningTrace,
    pub retrieved: RetrievedContext,
    pub timings: StageTimings,
    pub flags: Vec<Flag>,
    pub gold_label: Option<Label>,
}

impl Verdict {
    pub fn plan(&self) -> PlanKind {
        self.trace.plan_decision().plan()
    }

    pub fn is_error(&self) -> Option<bool> {
        self.gold_label.map(|g| g != self.label)
    }
}
