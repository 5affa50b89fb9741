//! Batch evaluation: metrics, error breakdown and the k sweep.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::domain::{Label, PlanKind, Sample, StageTimings, Verdict};
use crate::error::{Error, Result};
use crate::pipeline::{Pipeline, VerdictRecord};
use crate::retrieval::DualIndex;

/// Confusion counts with sarcastic (1) as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn from_pairs(pairs: &[(Label, Label)]) -> Self {
        let mut c = Self::default();
        for &(gold, pred) in pairs {
            match (gold, pred) {
                (Label::Sarcastic, Label::Sarcastic) => c.tp += 1,
                (Label::NonSarcastic, Label::Sarcastic) => c.fp += 1,
                (Label::Sarcastic, Label::NonSarcastic) => c.fn_ += 1,
                (Label::NonSarcastic, Label::NonSarcastic) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The same counts with the other class treated as positive.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub f1_sarcastic: f64,
    pub f1_non_sarcastic: f64,
    pub confusion: ConfusionCounts,
}

/// F1 of the positive class; a class with nothing to score gets 0.
fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

pub fn metrics_from_counts(c: ConfusionCounts) -> Result<ClassificationMetrics> {
    if c.total() == 0 {
        return Err(Error::InvalidInput("no labeled predictions to score".into()));
    }
    let f1_sarcastic = f1(c.tp, c.fp, c.fn_);
    let f1_non_sarcastic = f1(c.tn, c.fn_, c.fp);
    Ok(ClassificationMetrics {
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        macro_f1: (f1_sarcastic + f1_non_sarcastic) / 2.0,
        f1_sarcastic,
        f1_non_sarcastic,
        confusion: c,
    })
}

/// Metrics over (gold, predicted) pairs.
pub fn compute_metrics(pairs: &[(Label, Label)]) -> Result<ClassificationMetrics> {
    metrics_from_counts(ConfusionCounts::from_pairs(pairs))
}

/// One scored prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub id: String,
    pub gold: Label,
    pub predicted: Label,
    pub probability: f64,
}

impl Outcome {
    pub fn from_verdict(v: &Verdict) -> Option<Self> {
        Some(Self {
            id: v.sample_id.clone(),
            gold: v.gold_label?,
            predicted: v.label,
            probability: v.probability,
        })
    }

    pub fn from_record(r: &VerdictRecord) -> Option<Self> {
        Some(Self {
            id: r.id.clone(),
            gold: r.gold_label?,
            predicted: r.label,
            probability: r.probability,
        })
    }

    /// Probability the prediction assigned to its own label.
    pub fn confidence(&self) -> f64 {
        match self.predicted {
            Label::Sarcastic => self.probability,
            Label::NonSarcastic => 1.0 - self.probability,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDistribution {
    pub fp_count: usize,
    pub fn_count: usize,
    /// Share of errors that are false positives; 0 when there are none.
    pub fp_share: f64,
    pub fn_share: f64,
    pub no_errors: bool,
    /// Up to ten errors, most confident first.
    pub top_errors: Vec<Outcome>,
}

pub const TOP_ERRORS: usize = 10;

pub fn error_distribution(outcomes: &[Outcome]) -> ErrorDistribution {
    let mut errors: Vec<&Outcome> = outcomes.iter().filter(|o| o.gold != o.predicted).collect();
    let fp_count = errors.iter().filter(|o| o.predicted == Label::Sarcastic).count();
    let fn_count = errors.len() - fp_count;
    let (fp_share, fn_share) = if errors.is_empty() {
        (0.0, 0.0)
    } else {
        let n = errors.len() as f64;
        (fp_count as f64 / n, fn_count as f64 / n)
    };
    errors.sort_by(|a, b| b.confidence().total_cmp(&a.confidence()).then_with(|| a.id.cmp(&b.id)));
    ErrorDistribution {
        fp_count,
        fn_count,
        fp_share,
        fn_share,
        no_errors: errors.is_empty(),
        top_errors: errors.into_iter().take(TOP_ERRORS).cloned().collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub evaluated: usize,
    pub failed: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub f1_sarcastic: f64,
    pub f1_non_sarcastic: f64,
    pub confusion: ConfusionCounts,
    pub fp_share: f64,
    pub fn_share: f64,
    pub mean_timings: StageTimings,
    pub mean_agent_calls: f64,
    pub plan_distribution: BTreeMap<PlanKind, usize>,
    pub errors: ErrorDistribution,
    pub failures: Vec<SampleFailure>,
}

pub fn mean_timings(timings: &[StageTimings]) -> Option<StageTimings> {
    if timings.is_empty() {
        return None;
    }
    let n = timings.len() as f64;
    let mean = |f: fn(&StageTimings) -> f64| timings.iter().map(f).sum::<f64>() / n;
    Some(StageTimings {
        retrieval_ms: mean(|t| t.retrieval_ms),
        planning_ms: mean(|t| t.planning_ms),
        agents_ms: mean(|t| t.agents_ms),
        synthesis_ms: mean(|t| t.synthesis_ms),
        total_ms: mean(|t| t.total_ms),
    })
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    /// Successful verdicts in dataset order.
    pub verdicts: Vec<Verdict>,
}

/// Classifies every sample with up to `concurrency` in flight and scores
/// the results. Failed samples are left out of the metrics and counted;
/// more than 10% failures aborts the run.
pub async fn evaluate(
    pipeline: &Pipeline,
    samples: &[Sample],
    index: &DualIndex,
    concurrency: usize,
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("dataset is empty".into()));
    }
    if let Some(s) = samples.iter().find(|s| s.gold_label.is_none()) {
        return Err(Error::InvalidInput(format!("sample {} has no gold label", s.id)));
    }
    let results: Vec<Result<Verdict>> = stream::iter(samples.iter().map(|s| pipeline.classify(s, index)))
        .buffered(concurrency.max(1))
        .collect()
        .await;

    let mut verdicts = Vec::with_capacity(samples.len());
    let mut failures = Vec::new();
    for (sample, result) in samples.iter().zip(results) {
        match result {
            Ok(v) => verdicts.push(v),
            Err(e) => {
                log::warn!("sample {} failed: {e}", sample.id);
                failures.push(SampleFailure {
                    id: sample.id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    if failures.len() * 10 > samples.len() {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total: samples.len(),
        });
    }

    let outcomes: Vec<Outcome> = verdicts.iter().filter_map(Outcome::from_verdict).collect();
    let pairs: Vec<(Label, Label)> = outcomes.iter().map(|o| (o.gold, o.predicted)).collect();
    let m = compute_metrics(&pairs)?;
    let errors = error_distribution(&outcomes);
    let timings: Vec<StageTimings> = verdicts.iter().map(|v| v.timings).collect();
    let mut plan_distribution = BTreeMap::new();
    for v in &verdicts {
        *plan_distribution.entry(v.plan()).or_insert(0) += 1;
    }
    let agent_calls: usize = verdicts.iter().map(|v| v.trace.outputs().len()).sum();

    Ok(Evaluation {
        report: MetricsReport {
            samples: samples.len(),
            evaluated: verdicts.len(),
            failed: failures.len(),
            accuracy: m.accuracy,
            macro_f1: m.macro_f1,
            f1_sarcastic: m.f1_sarcastic,
            f1_non_sarcastic: m.f1_non_sarcastic,
            confusion: m.confusion,
            fp_share: errors.fp_share,
            fn_share: errors.fn_share,
            mean_timings: mean_timings(&timings).unwrap_or_default(),
            mean_agent_calls: agent_calls as f64 / verdicts.len() as f64,
            plan_distribution,
            errors,
            failures,
        },
        verdicts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    pub result: std::result::Result<MetricsReport, String>,
}

/// Runs [`evaluate`] once per k, keeping going when a k fails.
pub async fn sweep_k(
    pipeline: &Pipeline,
    samples: &[Sample],
    index: &DualIndex,
    k_values: &[usize],
    concurrency: usize,
) -> Result<Vec<SweepRow>> {
    if k_values.is_empty() {
        return Err(Error::InvalidInput("no k values to sweep".into()));
    }
    if k_values.contains(&0) {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let result = match pipeline.with_k(k) {
            Ok(p) => evaluate(&p, samples, index, concurrency)
                .await
                .map(|e| e.report)
                .map_err(|e| e.to_string()),
            Err(e) => Err(e.to_string()),
        };
        if let Err(e) = &result {
            log::error!("k={k} failed: {e}");
        }
        rows.push(SweepRow { k, result });
    }
    Ok(rows)
}

pub const SWEEP_CSV_HEADER: &str = "k,accuracy,macro_f1";

/// CSV of the successful sweep rows.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_CSV_HEADER}\n");
    for row in rows {
        if let Ok(r) = &row.result {
            writeln!(out, "{},{},{}", row.k, r.accuracy, r.macro_f1).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Per-class precision, recall and F1 written out from the definitions.
    fn oracle(tp: usize, fp: usize, fn_: usize, tn: usize) -> (f64, f64, f64, f64) {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let class_f1 = |tp: usize, fp: usize, fn_: usize| {
            let p = ratio(tp, tp + fp);
            let r = ratio(tp, tp + fn_);
            if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        };
        let f_pos = class_f1(tp, fp, fn_);
        let f_neg = class_f1(tn, fn_, fp);
        let acc = ratio(tp + tn, tp + fp + fn_ + tn);
        (acc, (f_pos + f_neg) / 2.0, f_pos, f_neg)
    }

    fn counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> ConfusionCounts {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    #[test]
    fn hand_computed_example() {
        let m = metrics_from_counts(counts(3, 1, 1, 5)).unwrap();
        let (acc, macro_f1, fs, fnn) = oracle(3, 1, 1, 5);
        assert_eq!(m.accuracy, 0.8);
        assert!((m.accuracy - acc).abs() < 1e-12);
        assert!((m.f1_sarcastic - 0.75).abs() < 1e-12);
        assert!((m.f1_non_sarcastic - 5.0 / 6.0).abs() < 1e-12);
        assert!((m.macro_f1 - macro_f1).abs() < 1e-12);
        assert!((m.f1_sarcastic - fs).abs() < 1e-12 && (m.f1_non_sarcastic - fnn).abs() < 1e-12);
    }

    #[test]
    fn matches_oracle_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let c = counts(
                rng.random_range(0..50),
                rng.random_range(0..50),
                rng.random_range(0..50),
                rng.random_range(0..50),
            );
            if c.total() == 0 {
                continue;
            }
            let m = metrics_from_counts(c).unwrap();
            let (acc, macro_f1, fs, fnn) = oracle(c.tp, c.fp, c.fn_, c.tn);
            assert!((m.accuracy - acc).abs() <= 1e-9);
            assert!((m.macro_f1 - macro_f1).abs() <= 1e-9, "{c:?}");
            assert!((m.f1_sarcastic - fs).abs() <= 1e-9);
            assert!((m.f1_non_sarcastic - fnn).abs() <= 1e-9);
        }
    }

    #[test]
    fn perfect_and_degenerate_cases() {
        use Label::*;
        let m = compute_metrics(&[(Sarcastic, Sarcastic), (NonSarcastic, NonSarcastic)]).unwrap();
        assert_eq!((m.accuracy, m.macro_f1), (1.0, 1.0));

        let m = compute_metrics(&[(NonSarcastic, NonSarcastic); 4]).unwrap();
        assert_eq!((m.accuracy, m.f1_sarcastic, m.f1_non_sarcastic, m.macro_f1), (1.0, 0.0, 1.0, 0.5));

        assert!(compute_metrics(&[]).is_err());
    }

    fn outcome(id: &str, gold: Label, predicted: Label, p: f64) -> Outcome {
        Outcome {
            id: id.into(),
            gold,
            predicted,
            probability: p,
        }
    }

    #[test]
    fn error_shares() {
        use Label::*;
        let mut outs = vec![
            outcome("a", NonSarcastic, Sarcastic, 0.9),
            outcome("b", NonSarcastic, Sarcastic, 0.6),
            outcome("c", Sarcastic, NonSarcastic, 0.05),
            outcome("d", Sarcastic, NonSarcastic, 0.4),
            outcome("e", Sarcastic, Sarcastic, 0.99),
        ];
        let d = error_distribution(&outs);
        assert_eq!((d.fp_share, d.fn_share), (0.5, 0.5));
        let ids: Vec<_> = d.top_errors.iter().map(|o| o.id.as_str()).collect();
        assert_eq!(ids, ["c", "a", "b", "d"]);

        outs.clear();
        for i in 0..97 {
            outs.push(outcome(&format!("fp{i:02}"), NonSarcastic, Sarcastic, 0.7));
        }
        for i in 0..3 {
            outs.push(outcome(&format!("fn{i}"), Sarcastic, NonSarcastic, 0.2));
        }
        let d = error_distribution(&outs);
        assert!((d.fp_share - 0.97).abs() < 1e-12);
        assert_eq!(d.top_errors.len(), TOP_ERRORS);
        assert!(d.top_errors.iter().all(|o| o.id.starts_with("fn") || o.id.starts_with("fp")));
        assert_eq!(d.top_errors[0].id, "fn0");

        let d = error_distribution(&[outcome("e", Sarcastic, Sarcastic, 0.99)]);
        assert!(d.no_errors);
        assert_eq!((d.fp_share, d.fn_share), (0.0, 0.0));
        assert!(d.top_errors.is_empty());
    }

    #[test]
    fn csv_format() {
        let rows = vec![SweepRow {
            k: 2,
            result: Err("boom".into()),
        }];
        assert_eq!(sweep_csv(&rows), "k,accuracy,macro_f1\n");
    }

    #[test]
    fn confusion_serializes_fn_key() {
        let json = serde_json::to_value(counts(1, 2, 3, 4)).unwrap();
        assert_eq!(json["fn"], 3);
    }

    proptest! {
        #[test]
        fn macro_f1_is_class_symmetric(tp in 0usize..200, fp in 0usize..200, fn_ in 0usize..200, tn in 0usize..200) {
            let c = counts(tp, fp, fn_, tn);
            prop_assume!(c.total() > 0);
            let a = metrics_from_counts(c).unwrap();
            let b = metrics_from_counts(c.swapped()).unwrap();
            prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
            prop_assert_eq!(a.accuracy, b.accuracy);
            prop_assert!((0.0..=1.0).contains(&a.macro_f1));
        }

        #[test]
        fn counts_cover_every_pair(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..100)) {
            let pairs: Vec<_> = pairs
                .into_iter()
                .map(|(g, p)| {
                    let l = |b| if b { Label::Sarcastic } else { Label::NonSarcastic };
                    (l(g), l(p))
                })
                .collect();
            prop_assert_eq!(ConfusionCounts::from_pairs(&pairs).total(), pairs.len());
        }
    }
}
