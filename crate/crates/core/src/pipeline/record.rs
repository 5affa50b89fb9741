use serde::{Deserialize, Serialize};

use crate::domain::{AgentKind, Label, PlanKind, SimilarityAnalysis, StageTimings, Verdict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub agent: AgentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedRecord {
    pub id: String,
    pub label: Label,
    pub similarity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub similarity_analysis: SimilarityAnalysis,
    pub llm_selected_plan: PlanKind,
    pub plan_confidence: f64,
    pub contextual_analysis: String,
    pub plan_reasoning: String,
    pub entities: Vec<String>,
    pub ambiguous: bool,
}

/// Serialized form of a [`Verdict`], one per line in batch output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub id: String,
    pub label: Label,
    pub probability: f64,
    pub explanation: String,
    pub plan: PlanKind,
    pub overridden: bool,
    pub agents: Vec<AgentRecord>,
    pub retrieved: Vec<RetrievedRecord>,
    pub timings: StageTimings,
    pub flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceRecord>,
}

impl VerdictRecord {
    /// `agent_content` keeps each agent's full output; `trace` adds the
    /// Stage 1 and Stage 2 artifacts and exemplar rationales.
    pub fn new(v: &Verdict, agent_content: bool, trace: bool) -> Self {
        let decision = v.trace.plan_decision();
        Self {
            id: v.sample_id.clone(),
            label: v.label,
            probability: v.probability,
            explanation: v.explanation.clone(),
            plan: decision.plan(),
            overridden: decision.overridden(),
            agents: v
                .trace
                .outputs()
                .iter()
                .map(|o| AgentRecord {
                    agent: o.agent,
                    content: (agent_content || trace).then(|| o.content.clone()),
                    elapsed_ms: o.elapsed_ms,
                })
                .collect(),
            retrieved: v
                .retrieved
                .iter()
                .map(|a| RetrievedRecord {
                    id: a.exemplar.id.clone(),
                    label: a.exemplar.label,
                    similarity: a.similarity,
                    rationale: trace.then(|| a.rationale.clone()),
                })
                .collect(),
            timings: v.timings,
            flags: v.flags.iter().map(ToString::to_string).collect(),
            gold_label: v.gold_label,
            trace: trace.then(|| TraceRecord {
                similarity_analysis: v.trace.similarity_analysis().clone(),
                llm_selected_plan: decision.llm_selected_plan(),
                plan_confidence: decision.confidence(),
                contextual_analysis: decision.contextual_analysis().to_owned(),
                plan_reasoning: decision.reasoning().to_owned(),
                entities: decision.entities().to_vec(),
                ambiguous: v.trace.ambiguous(),
            }),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("verdict record serializes")
    }
}
