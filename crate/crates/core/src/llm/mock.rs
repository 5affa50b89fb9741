//! Deterministic offline backend.
//!
//! Responses are a pure function of `(role, prompt, seed)`. Prompts can
//! steer the mock with `MOCK_<FIELD>=<value>` directives planted in the
//! query text; the first occurrence in a prompt wins. Without directives
//! the mock derives its choices from a hash of the inputs.
//!
//! | directive            | effect                                                   |
//! |----------------------|----------------------------------------------------------|
//! | `MOCK_PLAN=EV\|KD\|SI` | planner's `selected_plan` (full plan names also accepted) |
//! | `MOCK_PLAN_CONF=0.9` | planner confidence                                       |
//! | `MOCK_ENTITIES=a,b`  | planner's knowledge entities (`_` becomes a space)       |
//! | `MOCK_LABEL=0\|1`     | integrator label                                         |
//! | `MOCK_CONF=0.85`     | integrator `conf`                                        |
//! | `MOCK_DIRECTION=...` | similarity direction: `sarcastic`, `non-sarcastic`, `mixed` |
//! | `MOCK_JUDGE=...`     | `label_only` or `mismatch` integrator output shapes      |
//! | `MOCK_FAIL=r1,r2`    | listed roles return an error (`agents` = every agent)    |
//! | `MOCK_GARBLE=r1,r2`  | listed roles return unparseable prose                    |
//!
//! Role names: `rationale`, `similarity`, `planner`, `integrator` and the
//! agent names (`semantic`, `knowledge`, `expectation`, `alignment`,
//! `incongruity`, `rhetoric`).

use std::sync::Mutex;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{LlmBackend, LlmError, LlmRequest, LlmResponse, RoleTag};

#[derive(Debug, Clone, PartialEq)]
pub struct CallRecord {
    pub role: RoleTag,
    pub prompt: String,
    /// Offsets from backend creation.
    pub started: Duration,
    pub finished: Duration,
}

pub struct MockBackend {
    seed: u64,
    latency: Option<Duration>,
    epoch: Instant,
    log: Mutex<Vec<CallRecord>>,
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            latency: None,
            epoch: Instant::now(),
            log: Mutex::new(Vec::new()),
        }
    }

    /// Sleep this long inside every call (and report it as the latency).
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = Some(latency);
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.log.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.log.lock().unwrap().len()
    }

    pub fn count_role(&self, pred: impl Fn(RoleTag) -> bool) -> usize {
        self.log.lock().unwrap().iter().filter(|c| pred(c.role)).count()
    }

    pub fn clear_log(&self) {
        self.log.lock().unwrap().clear();
    }

    fn hash(&self, role: RoleTag, prompt: &str) -> u64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(role.name().as_bytes());
        h.update([0u8]);
        h.update(prompt.as_bytes());
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    /// Reported latency: the injected sleep, else a simulated 100-599 ms.
    fn reported_latency_ms(&self, h: u64) -> f64 {
        match self.latency {
            Some(d) => d.as_secs_f64() * 1e3,
            None => 100.0 + ((h >> 16) % 500) as f64,
        }
    }

    /// The deterministic response body for a request.
    pub fn respond(&self, role: RoleTag, prompt: &str) -> Result<String, LlmError> {
        if role_listed(directive(prompt, "FAIL"), role) {
            return Err(LlmError::Scripted(role.name().to_owned()));
        }
        if role_listed(directive(prompt, "GARBLE"), role) {
            return Ok(format!("I cannot comply with the {} format today.", role.name()));
        }
        let h = self.hash(role, prompt);
        Ok(match role {
            RoleTag::RationaleGen => rationale(prompt, h),
            RoleTag::SimilarityAnalyzer => similarity(prompt, h),
            RoleTag::Planner => planner(prompt, h),
            RoleTag::Agent(agent) => format!(
                "The {agent} analysis finds cue strength {}/10 and reads the text as {}.",
                h % 10 + 1,
                ["literal", "playful", "critical", "ironic"][(h >> 8) as usize % 4],
            ),
            RoleTag::Integrator => integrator(prompt, h),
        })
    }
}

#[async_trait]
impl LlmBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn fingerprint(&self) -> String {
        format!("mock:seed={}", self.seed)
    }

    async fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        if request.prompt.trim().is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        let started = self.epoch.elapsed();
        if let Some(d) = self.latency {
            tokio::time::sleep(d).await;
        }
        let result = self.respond(request.role, &request.prompt);
        let finished = self.epoch.elapsed();
        self.log.lock().unwrap().push(CallRecord {
            role: request.role,
            prompt: request.prompt.clone(),
            started,
            finished,
        });
        let text = result?;
        Ok(LlmResponse {
            text,
            latency_ms: self.reported_latency_ms(self.hash(request.role, &request.prompt)),
            token_usage: None,
        })
    }
}

/// Value of the first `MOCK_<field>=` directive in `prompt`.
fn directive<'a>(prompt: &'a str, field: &str) -> Option<&'a str> {
    let needle = format!("MOCK_{field}=");
    let start = prompt.find(&needle)? + needle.len();
    let rest = &prompt[start..];
    let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
    let value = rest[..end].trim_end_matches(|c: char| "\"'.;:)]}".contains(c));
    (!value.is_empty()).then_some(value)
}

fn role_listed(list: Option<&str>, role: RoleTag) -> bool {
    list.is_some_and(|l| {
        l.split(',').any(|r| r == role.name() || (r == "agents" && matches!(role, RoleTag::Agent(_))))
    })
}

fn unit(h: u64, shift: u32) -> f64 {
    ((h >> shift) % 1000) as f64 / 1000.0
}

fn parse_unit(value: Option<&str>) -> Option<f64> {
    value?.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn rationale(prompt: &str, h: u64) -> String {
    let word = prompt
        .lines()
        .find_map(|l| l.strip_prefix("Label: "))
        .unwrap_or("unlabeled")
        .trim();
    let cue = [
        "hyperbole",
        "sentiment-context mismatch",
        "literal phrasing",
        "a rhetorical question",
    ][(h % 4) as usize];
    format!(
        "The text is {word}: its wording relies on {cue}. The cue is {} in strength and needs {} background knowledge.",
        ["weak", "moderate", "strong"][(h >> 4) as usize % 3],
        ["little", "some", "substantial"][(h >> 8) as usize % 3],
    )
}

fn similarity(prompt: &str, h: u64) -> String {
    let direction = match directive(prompt, "DIRECTION") {
        Some(d) => d.to_owned(),
        None => ["sarcastic", "non-sarcastic", "mixed"][(h % 3) as usize].to_owned(),
    };
    let level = ["high", "medium", "low"][(h >> 4) as usize % 3];
    let candidate = ["expectation_violation", "knowledge_dependent", "simple_irony"][(h >> 8) as usize % 3];
    format!(
        "**Similarity to NON-SARCASTIC Examples:**\n\
         - Strength of similarity: {}\n\n\
         **Similarity to SARCASTIC Examples:**\n\
         - Strength of similarity: {}\n\n\
         **Comparative Assessment:**\n\
         - Primary similarity direction: more similar to {direction}\n\
         - Confidence level: {level}\n\n\
         **Contextual Inference:**\n\
         - Candidate sarcasm type if sarcastic: {candidate}\n",
        ["strong", "moderate", "weak"][(h >> 12) as usize % 3],
        ["strong", "moderate", "weak"][(h >> 16) as usize % 3],
    )
}

fn planner(prompt: &str, h: u64) -> String {
    let plan = match directive(prompt, "PLAN") {
        Some("EV") | Some("expectation_violation") => "expectation_violation",
        Some("KD") | Some("knowledge_dependent") => "knowledge_dependent",
        Some("SI") | Some("simple_irony") => "simple_irony",
        Some(other) => return format!("{{\"selected_plan\": \"{other}\", \"confidence\": 0.5}}"),
        None => ["expectation_violation", "knowledge_dependent", "simple_irony"][(h % 3) as usize],
    };
    let confidence = parse_unit(directive(prompt, "PLAN_CONF"))
        .unwrap_or_else(|| 0.3 + (unit(h, 8) * 0.7 * 100.0).round() / 100.0);
    let entities: Vec<String> = directive(prompt, "ENTITIES")
        .map(|list| {
            list.split(',')
                .filter(|e| !e.is_empty())
                .map(|e| e.replace('_', " "))
                .collect()
        })
        .unwrap_or_default();
    let entity_line = if entities.is_empty() {
        "none".to_owned()
    } else {
        format!("[{}]", entities.join(", "))
    };
    let body = json!({
        "selected_plan": plan,
        "confidence": confidence,
        "contextual_analysis": format!(
            "Likely situational context: an online reply; expectation baseline is a {} remark.",
            ["neutral", "supportive", "critical"][(h >> 20) as usize % 3]
        ),
        "reasoning": format!("The similarity pattern favours {plan}."),
    });
    format!(
        "**Feature Analysis:**\n\
         1. Contradiction level: {}\n\
         6. Knowledge entities: {entity_line}\n\n\
         **Output:**\n{body}\n",
        ["none", "low", "medium", "high"][(h >> 24) as usize % 4],
    )
}

fn integrator(prompt: &str, h: u64) -> String {
    let label: u8 = match directive(prompt, "LABEL") {
        Some("1") => 1,
        Some("0") => 0,
        _ => (h % 2) as u8,
    };
    let conf = parse_unit(directive(prompt, "CONF"))
        .unwrap_or_else(|| 0.5 + (unit(h, 8) * 0.5 * 100.0).round() / 100.0);
    let reasoning = format!(
        "Agents favour {} reading; the similarity analysis points the same way.",
        if label == 1 { "an ironic" } else { "a literal" }
    );
    match directive(prompt, "JUDGE") {
        Some("label_only") => format!("<<LABEL>> {label}"),
        Some("mismatch") => {
            format!("<<LABEL>> {label}\n{}", json!({ "label": 1 - label, "conf": conf, "reasoning": reasoning }))
        }
        _ => format!(
            "<<LABEL>> {label}\n{}",
            json!({ "label": label, "conf": conf, "reasoning": reasoning })
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::AgentKind;
    use crate::llm::LlmSettings;

    fn req(role: RoleTag, prompt: &str) -> LlmRequest {
        LlmRequest::new(role, prompt, &LlmSettings::default())
    }

    fn first_json(text: &str) -> serde_json::Value {
        let start = text.find('{').unwrap();
        let end = text.rfind('}').unwrap();
        serde_json::from_str(&text[start..=end]).unwrap()
    }

    #[test]
    fn directive_extraction() {
        assert_eq!(directive("q \"MOCK_PLAN=KD\" x", "PLAN"), Some("KD"));
        assert_eq!(directive("MOCK_PLAN_CONF=0.4 MOCK_PLAN=SI", "PLAN"), Some("SI"));
        assert_eq!(directive("MOCK_PLAN_CONF=0.4.", "PLAN_CONF"), Some("0.4"));
        assert_eq!(directive("nothing here", "PLAN"), None);
        assert_eq!(directive("MOCK_PLAN= x", "PLAN"), None);
    }

    #[tokio::test]
    async fn same_inputs_same_bytes() {
        let a = MockBackend::new(7);
        let b = MockBackend::new(7);
        for role in [
            RoleTag::RationaleGen,
            RoleTag::SimilarityAnalyzer,
            RoleTag::Planner,
            RoleTag::Agent(AgentKind::Semantic),
            RoleTag::Integrator,
        ] {
            let r = req(role, "Query: \"oh great, another monday\"");
            let x = a.complete(&r).await.unwrap();
            let y = b.complete(&r).await.unwrap();
            assert_eq!(x.text, y.text);
            assert_eq!(x.latency_ms, y.latency_ms);
        }
    }

    #[tokio::test]
    async fn seed_changes_unsteered_output() {
        let r = req(RoleTag::Agent(AgentKind::Rhetoric), "Text: \"fine\"");
        let outs: std::collections::HashSet<String> = futures::future::join_all(
            (0..8).map(|s| {
                let r = &r;
                async move { MockBackend::new(s).complete(r).await.unwrap().text }
            }),
        )
        .await
        .into_iter()
        .collect();
        assert!(outs.len() > 1);
    }

    #[tokio::test]
    async fn planner_follows_plan_directive() {
        let mock = MockBackend::new(0);
        let out = mock
            .complete(&req(RoleTag::Planner, "**Query:** \"the rocket MOCK_PLAN=KD\""))
            .await
            .unwrap();
        let v = first_json(&out.text);
        assert_eq!(v["selected_plan"], "knowledge_dependent");
        assert!(v["confidence"].as_f64().unwrap() <= 1.0);
    }

    #[tokio::test]
    async fn planner_reports_entities() {
        let mock = MockBackend::new(0);
        let out = mock
            .respond(RoleTag::Planner, "MOCK_ENTITIES=NASA,Obama,Roe_v._Wade")
            .unwrap();
        assert!(out.contains("Knowledge entities: [NASA, Obama, Roe v. Wade]"));
    }

    #[tokio::test]
    async fn integrator_scripted_label_and_conf() {
        let mock = MockBackend::new(0);
        let out = mock.respond(RoleTag::Integrator, "MOCK_LABEL=1 MOCK_CONF=0.85").unwrap();
        let mut lines = out.lines();
        assert_eq!(lines.next().unwrap(), "<<LABEL>> 1");
        let v: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
        assert_eq!(v["label"], 1);
        assert_eq!(v["conf"], 0.85);
    }

    #[tokio::test]
    async fn fail_and_garble_directives() {
        let mock = MockBackend::new(0);
        let p = "MOCK_FAIL=agents,planner MOCK_GARBLE=integrator";
        assert!(mock.respond(RoleTag::Agent(AgentKind::Knowledge), p).is_err());
        assert!(mock.respond(RoleTag::Planner, p).is_err());
        assert!(!mock.respond(RoleTag::Integrator, p).unwrap().contains("<<LABEL>>"));
        assert!(mock.respond(RoleTag::RationaleGen, p).is_ok());
    }

    #[tokio::test]
    async fn rationale_mentions_label() {
        let mock = MockBackend::new(0);
        let out = mock
            .respond(RoleTag::RationaleGen, "Text: \"x\"\nLabel: non-sarcastic\n")
            .unwrap();
        assert!(out.starts_with("The text is non-sarcastic"));
    }

    #[tokio::test]
    async fn calls_are_logged_and_latency_reported() {
        let mock = MockBackend::new(0).with_latency(Duration::from_millis(5));
        let resp = mock.complete(&req(RoleTag::Planner, "x")).await.unwrap();
        assert_eq!(resp.latency_ms, 5.0);
        assert_eq!(mock.call_count(), 1);
        assert_eq!(mock.calls()[0].role, RoleTag::Planner);
        assert!(mock.complete(&req(RoleTag::Planner, " ")).await.is_err());
    }
}
