//! Four-stage classification of one sample.
//!
//! Stage 1 retrieves exemplars, attaches rationales and runs the
//! similarity analyzer; stage 2 asks the meta-planner for a plan and applies
//! the override rules; stage 3 runs the plan's agent ensemble along its
//! dependency graph; stage 4 asks the integrator for the final judgment.

mod rationale;
mod record;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use futures::future::{join_all, BoxFuture, FutureExt, Shared};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;

pub use rationale::{CachedRationale, RationaleCache};
pub use record::{AgentRecord, RetrievedRecord, TraceRecord, VerdictRecord};

use crate::domain::{
    apply_threshold, ensemble_for, AgentKind, AgentOutput, AugmentedExemplar, Exemplar, Flag, Label,
    PlanDecision, PlanKind, ReasoningTrace, RetrievedContext, Sample, ScoredExemplar,
    SimilarityAnalysis, StageTimings, Verdict,
};
use crate::embedding::Embedder;
use crate::error::{Error, Result, Stage};
use crate::llm::{LlmBackend, LlmError, LlmRequest, LlmResponse, LlmSettings, RoleTag};
use crate::prompts::{
    parse_judgment, parse_planner, parse_similarity, Bindings, ParseError, TemplateName, TemplateSet,
};
use crate::retrieval::DualIndex;

/// Exemplar text is cut to this many characters wherever it is quoted
/// into a prompt.
pub const DIGEST_CHARS: usize = 400;

const UNAVAILABLE_RATIONALE: &str = "(unavailable)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub k: usize,
    pub max_in_flight_agents: usize,
    /// Simple irony is meant for texts shorter than this; longer ones are
    /// flagged but keep their plan.
    pub si_word_limit: usize,
    pub override_word_limit: usize,
    pub entity_trigger: usize,
    pub ambiguity_confidence_floor: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: 3,
            max_in_flight_agents: 4,
            si_word_limit: 15,
            override_word_limit: 50,
            entity_trigger: 3,
            ambiguity_confidence_floor: 0.6,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k", self.k),
            ("max_in_flight_agents", self.max_in_flight_agents),
            ("si_word_limit", self.si_word_limit),
            ("override_word_limit", self.override_word_limit),
            ("entity_trigger", self.entity_trigger),
        ] {
            if v == 0 {
                return Err(Error::InvalidInput(format!("{name} must be at least 1")));
            }
        }
        if !self.ambiguity_confidence_floor.is_finite() {
            return Err(Error::InvalidInput("ambiguity_confidence_floor must be finite".into()));
        }
        Ok(())
    }
}

/// How stage durations are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingMode {
    /// Elapsed wall time of each stage.
    #[default]
    WallClock,
    /// Derived from the latencies the backend reports, following the
    /// stage's concurrency structure. Cached rationales are charged their
    /// original generation latency, so the figures do not depend on cache
    /// state or scheduling.
    ReportedLatency,
}

/// The override rules applied to the planner's choice. Long texts cannot
/// be simple irony; enough named entities force the knowledge plan, and
/// that rule is applied last.
pub fn validate_plan(parsed: PlanKind, entity_count: usize, word_count: usize, config: &PipelineConfig) -> PlanKind {
    let mut plan = parsed;
    if word_count > config.override_word_limit && plan == PlanKind::SimpleIrony {
        plan = PlanKind::ExpectationViolation;
    }
    if entity_count >= config.entity_trigger {
        plan = PlanKind::KnowledgeDependent;
    }
    plan
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOne {
    pub retrieved: RetrievedContext,
    pub similarity: SimilarityAnalysis,
    pub flags: Vec<Flag>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageTwo {
    pub decision: PlanDecision,
    pub flags: Vec<Flag>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageThree {
    pub trace: ReasoningTrace,
    pub flags: Vec<Flag>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Judgment {
    pub label: Label,
    pub probability: f64,
    pub explanation: String,
    pub flags: Vec<Flag>,
    pub elapsed_ms: f64,
}

struct StageClock {
    start: Instant,
    mode: TimingMode,
}

impl StageClock {
    fn start(mode: TimingMode) -> Self {
        Self {
            start: Instant::now(),
            mode,
        }
    }

    fn finish(&self, reported_ms: f64) -> f64 {
        match self.mode {
            TimingMode::WallClock => self.start.elapsed().as_secs_f64() * 1e3,
            TimingMode::ReportedLatency => reported_ms,
        }
    }
}

#[derive(Clone)]
struct AgentRun {
    content: String,
    error: Option<String>,
    elapsed_ms: f64,
    /// Reported-latency finish time along the dependency graph.
    finish_ms: f64,
}

fn truncate_chars(text: &str, max: usize) -> String {
    match text.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &text[..i]),
        None => text.to_owned(),
    }
}

fn digest(a: &AugmentedExemplar) -> String {
    format!(
        "[{}, similarity {:.3}] \"{}\" Rationale: {}",
        a.exemplar.label.word(),
        a.similarity,
        truncate_chars(&a.exemplar.text, DIGEST_CHARS),
        a.rationale
    )
}

fn numbered_examples(side: &[AugmentedExemplar]) -> String {
    if side.is_empty() {
        return "(none retrieved)".to_owned();
    }
    side.iter()
        .enumerate()
        .map(|(i, a)| {
            format!(
                "{}. \"{}\" (similarity {:.3})\n   Rationale: {}",
                i + 1,
                truncate_chars(&a.exemplar.text, DIGEST_CHARS),
                a.similarity,
                a.rationale
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn brief_summary(side: &[AugmentedExemplar]) -> String {
    if side.is_empty() {
        return "(none retrieved)".to_owned();
    }
    side.iter()
        .map(|a| {
            format!(
                "\"{}\" (similarity {:.3}): {}",
                truncate_chars(&a.exemplar.text, DIGEST_CHARS),
                a.similarity,
                a.rationale
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn exemplar_digests(retrieved: &RetrievedContext) -> String {
    if retrieved.is_empty() {
        return "(none retrieved)".to_owned();
    }
    retrieved
        .iter()
        .map(|a| format!("- {}", digest(a)))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Merges flags, keeping first occurrences in order.
fn merge_flags<'a>(groups: impl IntoIterator<Item = &'a [Flag]>) -> Vec<Flag> {
    let mut out: Vec<Flag> = Vec::new();
    for flag in groups.into_iter().flatten() {
        if !out.contains(flag) {
            out.push(flag.clone());
        }
    }
    out
}

/// A configured pipeline. Cheap to clone; clones share the backend,
/// embedder and caches.
#[derive(Clone)]
pub struct Pipeline {
    backend: Arc<dyn LlmBackend>,
    embedder: Arc<Embedder>,
    templates: Arc<TemplateSet>,
    rationales: Arc<RationaleCache>,
    settings: LlmSettings,
    config: PipelineConfig,
    timing: TimingMode,
}

impl Pipeline {
    pub fn new(backend: Arc<dyn LlmBackend>, embedder: Arc<Embedder>, templates: Arc<TemplateSet>) -> Self {
        Self {
            backend,
            embedder,
            templates,
            rationales: Arc::new(RationaleCache::in_memory()),
            settings: LlmSettings::default(),
            config: PipelineConfig::default(),
            timing: TimingMode::default(),
        }
    }

    pub fn with_config(mut self, config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        self.config = config;
        Ok(self)
    }

    pub fn with_settings(mut self, settings: LlmSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn with_rationale_cache(mut self, cache: Arc<RationaleCache>) -> Self {
        self.rationales = cache;
        self
    }

    pub fn with_timing(mut self, timing: TimingMode) -> Self {
        self.timing = timing;
        self
    }

    /// Same pipeline with a different retrieval depth.
    pub fn with_k(&self, k: usize) -> Result<Self> {
        let config = PipelineConfig { k, ..self.config.clone() };
        self.clone().with_config(config)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn settings(&self) -> &LlmSettings {
        &self.settings
    }

    pub fn timing(&self) -> TimingMode {
        self.timing
    }

    pub fn embedder(&self) -> &Embedder {
        &self.embedder
    }

    pub fn rationales(&self) -> &RationaleCache {
        &self.rationales
    }

    async fn call(&self, role: RoleTag, prompt: String) -> Result<LlmResponse, LlmError> {
        self.backend.complete(&LlmRequest::new(role, prompt, &self.settings)).await
    }

    pub async fn classify(&self, sample: &Sample, index: &DualIndex) -> Result<Verdict> {
        let one = self.stage1_contextualize(sample, index).await?;
        let two = self.stage2_plan(sample, &one).await?;
        let three = self.stage3_execute(sample, &one, &two.decision).await?;
        let judgment = self.stage4_judge(sample, &three.trace).await?;
        let flags = merge_flags([
            one.flags.as_slice(),
            two.flags.as_slice(),
            three.flags.as_slice(),
            judgment.flags.as_slice(),
        ]);
        Ok(Verdict {
            sample_id: sample.id.clone(),
            label: judgment.label,
            probability: judgment.probability,
            explanation: judgment.explanation,
            trace: three.trace,
            retrieved: one.retrieved,
            timings: StageTimings::from_stages(
                one.elapsed_ms,
                two.elapsed_ms,
                three.elapsed_ms,
                judgment.elapsed_ms,
            ),
            flags,
            gold_label: sample.gold_label,
        })
    }

    pub async fn stage1_contextualize(&self, sample: &Sample, index: &DualIndex) -> Result<StageOne> {
        self.stage1(sample, index).await.map_err(|e| e.at(Stage::Retrieval))
    }

    async fn stage1(&self, sample: &Sample, index: &DualIndex) -> Result<StageOne> {
        let clock = StageClock::start(self.timing);
        let query = self.embedder.embed(&sample.text).await?;
        let scored = index.retrieve(&query, self.config.k)?;
        let mut flags = Vec::new();
        if scored.degraded {
            flags.push(Flag::DegradedRetrieval);
        }

        let rationales = join_all(scored.iter().map(|s| self.rationale_for(&s.exemplar))).await;
        let slowest = rationales
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .map(|r| r.latency_ms)
            .fold(0.0, f64::max);
        let mut rationales = rationales.into_iter();
        let mut augment = |side: Vec<ScoredExemplar>| -> Result<Vec<AugmentedExemplar>> {
            side.into_iter()
                .map(|s| {
                    let text = match rationales.next().expect("one rationale per exemplar") {
                        Ok(r) => r.rationale,
                        Err(e) => {
                            log::warn!("rationale for exemplar {} failed: {e}", s.exemplar.id);
                            flags.push(Flag::RationaleUnavailable(s.exemplar.id.clone()));
                            UNAVAILABLE_RATIONALE.to_owned()
                        }
                    };
                    AugmentedExemplar::new(s, text)
                })
                .collect()
        };
        let retrieved = RetrievedContext {
            sarcastic: augment(scored.sarcastic)?,
            non_sarcastic: augment(scored.non_sarcastic)?,
            k: scored.k,
            degraded: scored.degraded,
        };

        let mut b = Bindings::new();
        b.insert("text", sample.text.clone());
        if let Some(c) = &sample.context {
            b.insert("context_if_available", format!("**Context:** \"{c}\""));
        }
        b.insert("non_sarcastic_examples", numbered_examples(&retrieved.non_sarcastic));
        b.insert("sarcastic_examples", numbered_examples(&retrieved.sarcastic));
        let prompt = self.templates.render(TemplateName::SimilarityAnalyzer, &b)?;
        let response = self.call(RoleTag::SimilarityAnalyzer, prompt).await?;
        let similarity = parse_similarity(&response.text);
        if similarity.primary_direction.is_none()
            && similarity.confidence_level.is_none()
            && similarity.candidate_type.is_none()
        {
            flags.push(Flag::SimilarityUnparsed);
        }
        Ok(StageOne {
            retrieved,
            similarity,
            flags,
            elapsed_ms: clock.finish(slowest + response.latency_ms),
        })
    }

    async fn rationale_for(&self, exemplar: &Exemplar) -> Result<CachedRationale> {
        let model = format!("{}|{}", self.backend.fingerprint(), self.settings.model_id);
        let key = RationaleCache::key(exemplar, &model);
        self.rationales
            .get_or_generate(&key, || async {
                let mut b = Bindings::new();
                b.insert("text", exemplar.text.clone());
                b.insert("label", exemplar.label.word().to_owned());
                let prompt = self.templates.render(TemplateName::Rationale, &b)?;
                let response = self.call(RoleTag::RationaleGen, prompt).await?;
                Ok(CachedRationale {
                    rationale: response.text,
                    latency_ms: response.latency_ms,
                })
            })
            .await
    }

    pub async fn stage2_plan(&self, sample: &Sample, one: &StageOne) -> Result<StageTwo> {
        self.stage2(sample, one).await.map_err(|e| e.at(Stage::Planning))
    }

    async fn stage2(&self, sample: &Sample, one: &StageOne) -> Result<StageTwo> {
        let clock = StageClock::start(self.timing);
        let mut b = Bindings::new();
        b.insert("text", sample.text.clone());
        b.insert("similarity_analysis_output", one.similarity.raw_text.clone());
        b.insert("brief_summary_of_non_sarc_examples", brief_summary(&one.retrieved.non_sarcastic));
        b.insert("brief_summary_of_sarc_examples", brief_summary(&one.retrieved.sarcastic));
        let prompt = self.templates.render(TemplateName::MetaPlanner, &b)?;
        let response = self.call(RoleTag::Planner, prompt).await?;

        let mut flags = Vec::new();
        let decision = match parse_planner(&response.text) {
            Ok(p) => {
                let plan = validate_plan(p.selected_plan, p.entities.len(), sample.word_count(), &self.config);
                let analysis = if p.contextual_analysis.trim().is_empty() {
                    "(the planner gave no contextual analysis)".to_owned()
                } else {
                    p.contextual_analysis
                };
                PlanDecision::new(plan, p.confidence, analysis, p.reasoning, p.selected_plan, p.entities)?
            }
            Err(e) => {
                log::warn!("planner output for {} unparseable: {e}", sample.id);
                flags.push(Flag::PlannerParseFailed);
                PlanDecision::new(
                    PlanKind::ExpectationViolation,
                    0.0,
                    "(the planner output could not be parsed)",
                    format!("fallback plan after parse failure: {e}"),
                    PlanKind::ExpectationViolation,
                    Vec::new(),
                )?
            }
        };
        if decision.plan() == PlanKind::SimpleIrony && sample.word_count() >= self.config.si_word_limit {
            flags.push(Flag::SiLengthGuidelineExceeded);
        }
        Ok(StageTwo {
            decision,
            flags,
            elapsed_ms: clock.finish(response.latency_ms),
        })
    }

    /// Whether a decision widens simple irony with the support agents.
    pub fn is_ambiguous(&self, decision: &PlanDecision) -> bool {
        decision.plan() == PlanKind::SimpleIrony && decision.confidence() < self.config.ambiguity_confidence_floor
    }

    pub async fn stage3_execute(&self, sample: &Sample, one: &StageOne, decision: &PlanDecision) -> Result<StageThree> {
        self.stage3(sample, one, decision).await.map_err(|e| e.at(Stage::Agents))
    }

    async fn stage3(&self, sample: &Sample, one: &StageOne, decision: &PlanDecision) -> Result<StageThree> {
        let clock = StageClock::start(self.timing);
        let ambiguous = self.is_ambiguous(decision);
        let permits = Semaphore::new(self.config.max_in_flight_agents.max(1));

        // Ensemble iteration follows the canonical order, so every
        // upstream agent is scheduled before its dependents.
        let mut runs: BTreeMap<AgentKind, Shared<BoxFuture<'_, AgentRun>>> = BTreeMap::new();
        for agent in ensemble_for(decision.plan(), ambiguous) {
            let deps: Vec<_> = agent
                .upstream()
                .iter()
                .filter_map(|u| runs.get(u).map(|r| (*u, r.clone())))
                .collect();
            let permits = &permits;
            let run = async move {
                let mut upstream = BTreeMap::new();
                let mut ready_ms: f64 = 0.0;
                for (kind, dep) in deps {
                    let done = dep.await;
                    ready_ms = ready_ms.max(done.finish_ms);
                    upstream.insert(kind, done.content);
                }
                let prompt = match self.agent_prompt(agent, sample, one, decision, &upstream) {
                    Ok(p) => p,
                    Err(e) => {
                        return AgentRun {
                            content: format!("(agent failed: {e})"),
                            error: Some(e.to_string()),
                            elapsed_ms: 0.0,
                            finish_ms: ready_ms,
                        }
                    }
                };
                let _permit = permits.acquire().await.expect("semaphore is never closed");
                let start = Instant::now();
                let result = self.call(RoleTag::Agent(agent), prompt).await;
                let wall_ms = start.elapsed().as_secs_f64() * 1e3;
                match result {
                    Ok(r) => AgentRun {
                        content: r.text,
                        error: None,
                        elapsed_ms: match self.timing {
                            TimingMode::WallClock => wall_ms,
                            TimingMode::ReportedLatency => r.latency_ms,
                        },
                        finish_ms: ready_ms + r.latency_ms,
                    },
                    Err(e) => AgentRun {
                        content: format!("(agent failed: {e})"),
                        error: Some(e.to_string()),
                        elapsed_ms: match self.timing {
                            TimingMode::WallClock => wall_ms,
                            TimingMode::ReportedLatency => 0.0,
                        },
                        finish_ms: ready_ms,
                    },
                }
            }
            .boxed()
            .shared();
            runs.insert(agent, run);
        }

        let agents: Vec<AgentKind> = runs.keys().copied().collect();
        let done = join_all(runs.into_values()).await;
        let mut flags = Vec::new();
        let mut first_error = None;
        let mut outputs = Vec::with_capacity(done.len());
        for (agent, run) in agents.into_iter().zip(done) {
            if let Some(e) = run.error {
                log::warn!("agent {agent} failed for {}: {e}", sample.id);
                flags.push(Flag::AgentFailed(agent));
                first_error.get_or_insert(e);
            }
            outputs.push((agent, run.content, run.elapsed_ms, run.finish_ms));
        }
        if flags.len() == outputs.len() {
            return Err(Error::AllAgentsFailed(first_error.expect("at least one agent ran")));
        }
        let critical_path = outputs.iter().map(|o| o.3).fold(0.0, f64::max);
        let outputs = outputs
            .into_iter()
            .map(|(agent, content, elapsed_ms, _)| AgentOutput {
                agent,
                content,
                elapsed_ms,
            })
            .collect();
        let trace = ReasoningTrace::new(outputs, one.similarity.clone(), decision.clone(), ambiguous)?;
        Ok(StageThree {
            trace,
            flags,
            elapsed_ms: clock.finish(critical_path),
        })
    }

    /// Context block for templates that ask for a context agent's output:
    /// conversational context, the planner's contextual analysis and the
    /// retrieved exemplar digests.
    fn context_block(sample: &Sample, one: &StageOne, decision: &PlanDecision) -> String {
        let mut out = String::new();
        if let Some(c) = &sample.context {
            out.push_str(&format!("Conversational context: \"{c}\"\n"));
        }
        out.push_str(&format!(
            "Planner contextual analysis: {}\nRetrieved exemplars:\n{}",
            decision.contextual_analysis(),
            exemplar_digests(&one.retrieved)
        ));
        out
    }

    fn agent_prompt(
        &self,
        agent: AgentKind,
        sample: &Sample,
        one: &StageOne,
        decision: &PlanDecision,
        upstream: &BTreeMap<AgentKind, String>,
    ) -> Result<String> {
        let mut b = Bindings::new();
        b.insert("text", sample.text.clone());
        let upstream_or = |kind: AgentKind| {
            upstream.get(&kind).cloned().unwrap_or_else(|| {
                format!(
                    "({kind} agent not in this ensemble) Planner contextual analysis: {}",
                    decision.contextual_analysis()
                )
            })
        };
        let template = match agent {
            AgentKind::Semantic | AgentKind::Rhetoric => {
                if let Some(c) = &sample.context {
                    b.insert("context", c.clone());
                }
                if agent == AgentKind::Semantic {
                    TemplateName::SemanticAgent
                } else {
                    TemplateName::RhetoricAgent
                }
            }
            AgentKind::Knowledge => {
                b.insert("context_agent_output", Self::context_block(sample, one, decision));
                TemplateName::KnowledgeAgent
            }
            AgentKind::Expectation => {
                b.insert("context_agent_output", Self::context_block(sample, one, decision));
                b.insert("semantic_agent_output", upstream_or(AgentKind::Semantic));
                b.insert("meta_planner_context", decision.contextual_analysis().to_owned());
                TemplateName::ExpectationAgent
            }
            AgentKind::Alignment => {
                b.insert("semantic_agent_output", upstream_or(AgentKind::Semantic));
                b.insert("knowledge_agent_output", upstream_or(AgentKind::Knowledge));
                b.insert(
                    "similarity_analysis_summary",
                    format!(
                        "{}\nRetrieved exemplars:\n{}",
                        one.similarity.raw_text.trim_end(),
                        exemplar_digests(&one.retrieved)
                    ),
                );
                TemplateName::AlignmentAgent
            }
            AgentKind::Incongruity => {
                b.insert("expectation_agent_output", upstream_or(AgentKind::Expectation));
                TemplateName::IncongruityAgent
            }
        };
        Ok(self.templates.render(template, &b)?)
    }

    pub async fn stage4_judge(&self, sample: &Sample, trace: &ReasoningTrace) -> Result<Judgment> {
        self.stage4(sample, trace).await.map_err(|e| e.at(Stage::Synthesis))
    }

    async fn stage4(&self, sample: &Sample, trace: &ReasoningTrace) -> Result<Judgment> {
        if trace.outputs().is_empty() {
            return Err(Error::InvalidInput("reasoning trace is empty".into()));
        }
        let clock = StageClock::start(self.timing);
        let agent_outputs: Vec<_> = trace
            .outputs()
            .iter()
            .map(|o| json!({ "agent": o.agent, "output": o.content }))
            .collect();
        let mut b = Bindings::new();
        b.insert("text", sample.text.clone());
        b.insert("similarity_analysis_from_stage1", trace.similarity_analysis().raw_text.clone());
        b.insert("plan_type", trace.plan_decision().plan().as_str().to_owned());
        b.insert("O_plan_summary", trace.plan_decision().contextual_analysis().to_owned());
        b.insert(
            "all_agent_outputs_json",
            serde_json::to_string_pretty(&agent_outputs).expect("agent outputs serialize"),
        );
        let prompt = self.templates.render(TemplateName::Integrator, &b)?;
        let response = self.call(RoleTag::Integrator, prompt).await?;

        let mut flags = Vec::new();
        let (stated, probability, explanation) = match parse_judgment(&response.text) {
            Ok(j) => {
                if j.degraded {
                    flags.push(Flag::JudgmentDegraded);
                }
                let explanation = if j.reasoning.trim().is_empty() {
                    response.text.trim().to_owned()
                } else {
                    j.reasoning.clone()
                };
                (Some(j.label), j.probability(), explanation)
            }
            Err(e) => {
                log::warn!("judgment for {} unparseable: {e}", sample.id);
                flags.push(Flag::JudgmentParseFailed);
                let stated = match e {
                    ParseError::LabelMismatch { line, .. } => Label::from_int(line.into()),
                    _ => None,
                };
                (stated, 0.5, response.text.trim().to_owned())
            }
        };
        let label = apply_threshold(probability)?;
        if stated.is_some_and(|s| s != label) {
            flags.push(Flag::ThresholdDisagreesWithStatedLabel);
        }
        Ok(Judgment {
            label,
            probability,
            explanation,
            flags,
            elapsed_ms: clock.finish(response.latency_ms),
        })
    }
}
