use std::sync::Arc;

use ramsd_core::domain::{AugmentedExemplar, Exemplar, Label, RetrievedContext, Sample, ScoredExemplar, SimilarityAnalysis};
use ramsd_core::embedding::{Embedder, EmbeddingCache, FeatureHashEmbedder};
use ramsd_core::llm::{MockBackend, RoleTag};
use ramsd_core::pipeline::{Pipeline, StageOne};
use ramsd_core::prompts::TemplateSet;

fn exemplar(id: &str, text: &str, label: Label, similarity: f64, rationale: &str) -> AugmentedExemplar {
    let scored = ScoredExemplar {
        exemplar: Arc::new(Exemplar {
            id: id.into(),
            text: text.into(),
            label,
            embedding: vec![1.0],
        }),
        similarity,
    };
    AugmentedExemplar::new(scored, rationale).unwrap()
}

#[tokio::test]
async fn meta_planner_prompt_with_three_per_side() {
    let backend = Arc::new(MockBackend::new(0));
    let embedder = Arc::new(Embedder::new(
        Arc::new(FeatureHashEmbedder::new(8, 0)),
        Arc::new(EmbeddingCache::in_memory()),
    ));
    let pipeline = Pipeline::new(backend.clone(), embedder, Arc::new(TemplateSet::builtin().unwrap()));

    let s = Label::Sarcastic;
    let n = Label::NonSarcastic;
    let one = StageOne {
        retrieved: RetrievedContext {
            sarcastic: vec![
                exemplar("s1", "Oh great, another delay.", s, 0.91, "Praise for an obvious annoyance."),
                exemplar("s2", "Love standing on the platform for an hour.", s, 0.72, "Positive verb paired with a miserable wait."),
                exemplar("s3", "Best commute ever.", s, 1.0 / 3.0, "Superlative aimed at a bad experience."),
            ],
            non_sarcastic: vec![
                exemplar("n1", "The train leaves at six.", n, 0.64, "States a schedule plainly."),
                exemplar("n2", "Trains were delayed by snow.", n, 0.55, "Reports a delay without judgment."),
                exemplar("n3", "I take the train to work.", n, 0.125, "Describes a routine."),
            ],
            k: 3,
            degraded: false,
        },
        similarity: SimilarityAnalysis {
            raw_text: "Primary similarity direction: sarcastic. Confidence level: high.".into(),
            primary_direction: None,
            confidence_level: None,
            candidate_type: None,
        },
        flags: Vec::new(),
        elapsed_ms: 0.0,
    };
    let sample = Sample::new("q", "Great, the train is late again.", None, None).unwrap();
    pipeline.stage2_plan(&sample, &one).await.unwrap();

    let calls = backend.calls();
    assert_eq!(calls.len(), 1);
    assert_eq!(calls[0].role, RoleTag::Planner);
    let expected = include_str!("golden/meta_planner_3x3.txt");
    assert_eq!(calls[0].prompt, expected);
}
