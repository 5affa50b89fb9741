use std::sync::Arc;

use ramsd_core::corpus::CorpusRow;
use ramsd_core::domain::{Label, Sample};
use ramsd_core::embedding::{Embedder, EmbeddingCache, FeatureHashEmbedder};
use ramsd_core::evaluation::{evaluate, sweep_csv, sweep_k, SWEEP_CSV_HEADER};
use ramsd_core::llm::MockBackend;
use ramsd_core::pipeline::{Pipeline, TimingMode, VerdictRecord};
use ramsd_core::prompts::TemplateSet;
use ramsd_core::retrieval::{build_index, ingest_corpus, DualIndex};
use ramsd_core::Error;

fn kb_rows() -> Vec<CorpusRow> {
    (0..24)
        .map(|i| CorpusRow {
            id: None,
            text: if i % 2 == 0 {
                format!("Oh wonderful, delay number {i}. Best airline ever.")
            } else {
                format!("Flight {i} departs from gate {} at noon.", i + 3)
            },
            label: Some(if i % 2 == 0 { Label::Sarcastic } else { Label::NonSarcastic }),
            context: None,
        })
        .collect()
}

async fn setup(seed: u64) -> (Pipeline, DualIndex, Arc<Embedder>) {
    let embedder = Arc::new(Embedder::new(
        Arc::new(FeatureHashEmbedder::new(64, 0)),
        Arc::new(EmbeddingCache::in_memory()),
    ));
    let index = build_index(ingest_corpus(&kb_rows(), &embedder).await.unwrap()).unwrap();
    let pipeline = Pipeline::new(
        Arc::new(MockBackend::new(seed)),
        embedder.clone(),
        Arc::new(TemplateSet::builtin().unwrap()),
    )
    .with_timing(TimingMode::ReportedLatency);
    (pipeline, index, embedder)
}

/// `n` samples whose text scripts the judge to echo the gold label, or to
/// answer `constant` when given.
fn dataset(n: usize, constant: Option<u8>) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            let gold = (i % 3 == 0) as u8;
            let said = constant.unwrap_or(gold);
            Sample::new(
                format!("s{i:02}"),
                format!("Sample {i} says something MOCK_LABEL={said} MOCK_CONF=0.8"),
                None,
                Label::from_int(gold.into()),
            )
            .unwrap()
        })
        .collect()
}

#[tokio::test]
async fn echoing_judge_scores_perfectly() {
    let (p, index, _) = setup(1).await;
    let data = dataset(20, None);
    let e = evaluate(&p, &data, &index, 4).await.unwrap();
    assert_eq!(e.report.accuracy, 1.0);
    assert_eq!(e.report.macro_f1, 1.0);
    assert!(e.report.errors.no_errors);
    assert_eq!(e.verdicts.len(), 20);
    let ids: Vec<_> = e.verdicts.iter().map(|v| v.sample_id.clone()).collect();
    let expected: Vec<_> = data.iter().map(|s| s.id.clone()).collect();
    assert_eq!(ids, expected);
    assert_eq!(e.report.plan_distribution.values().sum::<usize>(), 20);
}

#[tokio::test]
async fn constant_predictor_false_positives() {
    let (p, index, _) = setup(1).await;
    let data = dataset(20, Some(1));
    let e = evaluate(&p, &data, &index, 4).await.unwrap();
    let gold_zero = data.iter().filter(|s| s.gold_label == Some(Label::NonSarcastic)).count();
    assert_eq!(e.report.confusion.fp, gold_zero);
    assert_eq!(e.report.confusion.fn_, 0);
    assert_eq!(e.report.fp_share, 1.0);
}

#[tokio::test]
async fn mean_timings_add_up() {
    let (p, index, _) = setup(2).await;
    let e = evaluate(&p, &dataset(20, None), &index, 4).await.unwrap();
    let t = e.report.mean_timings;
    let sum: f64 = t.stages().iter().sum();
    assert!((sum - t.total_ms).abs() <= 0.01 * t.total_ms);
    assert!(e.report.mean_agent_calls >= 1.0 && e.report.mean_agent_calls <= 4.0);
}

#[tokio::test]
async fn evaluate_is_deterministic() {
    let run = || async {
        let (p, index, _) = setup(7).await;
        let e = evaluate(&p, &dataset(20, None), &index, 4).await.unwrap();
        let lines: Vec<String> = e
            .verdicts
            .iter()
            .map(|v| VerdictRecord::new(v, true, false).to_json_line())
            .collect();
        (lines, serde_json::to_string(&e.report).unwrap())
    };
    assert_eq!(run().await, run().await);
}

#[tokio::test]
async fn failures_are_counted_then_abort_above_ten_percent() {
    let (p, index, _) = setup(1).await;
    let mut data = dataset(20, None);
    for s in data.iter_mut().take(2) {
        s.text.push_str(" MOCK_FAIL=planner");
    }
    let e = evaluate(&p, &data, &index, 4).await.unwrap();
    assert_eq!((e.report.failed, e.report.evaluated), (2, 18));
    assert_eq!(e.report.failures[0].id, "s00");
    assert_eq!(e.report.confusion.total(), 18);

    data[2].text.push_str(" MOCK_FAIL=planner");
    let err = evaluate(&p, &data, &index, 4).await.unwrap_err();
    assert!(matches!(err, Error::TooManyFailures { failed: 3, total: 20 }));
}

#[tokio::test]
async fn unlabeled_or_empty_datasets_are_rejected() {
    let (p, index, _) = setup(1).await;
    assert!(evaluate(&p, &[], &index, 1).await.is_err());
    let unlabeled = vec![Sample::new("x", "text", None, None).unwrap()];
    assert!(matches!(evaluate(&p, &unlabeled, &index, 1).await, Err(Error::InvalidInput(_))));
}

#[tokio::test]
async fn sweep_rows_match_standalone_runs() {
    let (p, index, embedder) = setup(3).await;
    let data = dataset(12, None);
    let ks: Vec<usize> = (1..=10).collect();
    let before = embedder.fresh_count();
    let rows = sweep_k(&p, &data, &index, &ks, 4).await.unwrap();
    let csv = sweep_csv(&rows);
    assert_eq!(csv.lines().next(), Some(SWEEP_CSV_HEADER));
    assert_eq!(csv.lines().count(), 11);
    // Query embeddings are paid once, whatever k is.
    assert_eq!(embedder.fresh_count() - before, data.len());

    let (fresh, index2, _) = setup(3).await;
    let k3 = evaluate(&fresh.with_k(3).unwrap(), &data, &index2, 4).await.unwrap();
    assert_eq!(rows[2].result.as_ref().unwrap(), &k3.report);

    let shuffled = [7, 3, 10, 1];
    let rows2 = sweep_k(&p, &data, &index, &shuffled, 2).await.unwrap();
    for row in rows2 {
        assert_eq!(row.result, rows[row.k - 1].result, "k={}", row.k);
    }
}

#[tokio::test]
async fn sweep_rejects_bad_k_lists() {
    let (p, index, _) = setup(3).await;
    let data = dataset(4, None);
    assert!(sweep_k(&p, &data, &index, &[], 1).await.is_err());
    assert!(sweep_k(&p, &data, &index, &[0, 1], 1).await.is_err());
}
