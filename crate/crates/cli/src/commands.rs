use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime};

use serde::{Deserialize, Serialize};

use ramsd_core::corpus::read_jsonl;
use ramsd_core::domain::Sample;
use ramsd_core::embedding::{Embedder, EmbeddingCache, EmbeddingProvider, FeatureHashEmbedder, RemoteEmbedder};
use ramsd_core::evaluation::{evaluate, sweep_csv, sweep_k, MetricsReport};
use ramsd_core::llm::{LlmBackend, LlmSettings, MockBackend, RemoteChat};
use ramsd_core::pipeline::{Pipeline, RationaleCache, VerdictRecord};
use ramsd_core::prompts::TemplateSet;
use ramsd_core::retrieval::{ingest_corpus, DualIndex};

use crate::config::{AppConfig, BackendKind, ConfigError, EmbedderKind};
use crate::index_file::{self, IndexError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Index(#[from] IndexError),

    #[error("{0}")]
    Pipeline(String),

    #[error("{0}")]
    Input(String),

    #[error("{0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Index(_) => 4,
            CliError::Pipeline(_) => 5,
            CliError::Input(_) => 6,
            CliError::Output(_) => 7,
        }
    }
}

impl From<ramsd_core::Error> for CliError {
    fn from(e: ramsd_core::Error) -> Self {
        use ramsd_core::Error;
        match e {
            Error::Corpus(_) | Error::InvalidInput(_) => CliError::Input(e.to_string()),
            Error::IngestAborted { .. } => {
                CliError::Pipeline(format!("{e}\nembedded rows are cached; re-run ingest to resume"))
            }
            other => CliError::Pipeline(other.to_string()),
        }
    }
}

fn output_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Output(format!("cannot write {}: {e}", path.display()))
}

fn api_key(config: &AppConfig) -> Result<String, CliError> {
    std::env::var(&config.api_key_env).map_err(|_| {
        CliError::Config(ConfigError(format!(
            "the remote provider needs an API key in the environment variable {}",
            config.api_key_env
        )))
    })
}

pub fn build_embedder(config: &AppConfig) -> Result<Arc<Embedder>, CliError> {
    let provider: Arc<dyn EmbeddingProvider> = match config.embedder {
        EmbedderKind::Hashing => Arc::new(FeatureHashEmbedder::new(config.embed_dimension, 0)),
        EmbedderKind::Remote => Arc::new(RemoteEmbedder::new(
            &config.base_url,
            &config.embed_model,
            config.embed_dimension,
            Some(api_key(config)?),
        )),
    };
    let path = config.embedding_cache_path();
    let cache = EmbeddingCache::open(&path)
        .map_err(|e| CliError::Config(ConfigError(format!("cannot open cache {}: {e}", path.display()))))?;
    Ok(Arc::new(Embedder::new(provider, Arc::new(cache))))
}

pub fn build_pipeline(config: &AppConfig, embedder: Arc<Embedder>) -> Result<Pipeline, CliError> {
    let backend: Arc<dyn LlmBackend> = match config.backend {
        BackendKind::Mock => Arc::new(MockBackend::new(config.seed)),
        BackendKind::Remote => Arc::new(RemoteChat::new(&config.base_url, Some(api_key(config)?))),
    };
    let templates = match &config.templates_dir {
        Some(dir) => TemplateSet::load_dir(dir),
        None => TemplateSet::builtin(),
    }
    .map_err(|e| CliError::Config(ConfigError(format!("templates: {e}"))))?;
    let path = config.rationale_cache_path();
    let rationales = RationaleCache::open(&path)
        .map_err(|e| CliError::Config(ConfigError(format!("cannot open cache {}: {e}", path.display()))))?;
    let pipeline = Pipeline::new(backend, embedder, Arc::new(templates))
        .with_config(config.pipeline.clone())?
        .with_settings(LlmSettings {
            model_id: config.chat_model.clone(),
            temperature: config.temperature,
            max_tokens: config.max_tokens,
        })
        .with_rationale_cache(Arc::new(rationales))
        .with_timing(config.timing);
    Ok(pipeline)
}

fn load_index(config: &AppConfig, embedder: &Embedder) -> Result<DualIndex, CliError> {
    let (header, index) = index_file::load(&config.index_path(), embedder)?;
    if header.sarcastic == 0 || header.non_sarcastic == 0 {
        log::warn!(
            "index has sarcastic={} non_sarcastic={}; retrieval will be one-sided",
            header.sarcastic,
            header.non_sarcastic
        );
    }
    Ok(index)
}

fn read_samples(path: &Path, require_label: bool) -> Result<Vec<Sample>, CliError> {
    let rows = read_jsonl(path, require_label).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(rows.into_iter().enumerate().map(|(i, r)| r.into_sample(i)).collect())
}

/// Refuses to replace `path` unless `force` is set.
fn claim(path: &Path, force: bool) -> Result<(), CliError> {
    if path.exists() && !force {
        return Err(CliError::Output(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

pub async fn ingest(config: &AppConfig, corpus: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let rows = read_jsonl(corpus, true).map_err(|e| CliError::Input(format!("{}: {e}", corpus.display())))?;
    let embedder = build_embedder(config)?;
    let exemplars = ingest_corpus(&rows, &embedder).await?;
    let path = config.index_path();
    let header = index_file::write(&path, &exemplars, &embedder)?;
    let print = |out: &mut dyn Write, s: String| writeln!(out, "{s}").map_err(|e| CliError::Output(e.to_string()));
    print(out, format!("indexed {} exemplars into {}", header.rows, path.display()))?;
    print(
        out,
        format!(
            "partitions: sarcastic={} non_sarcastic={}",
            header.sarcastic, header.non_sarcastic
        ),
    )?;
    print(out, format!("{} new embeddings", embedder.fresh_count()))?;
    if header.sarcastic == 0 || header.non_sarcastic == 0 {
        log::warn!("one partition is empty; retrieval will be one-sided");
    }
    Ok(())
}

pub async fn classify(
    config: &AppConfig,
    text: &str,
    context: Option<String>,
    trace: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let sample = Sample::new("query", text, context, None).map_err(|e| CliError::Input(e.to_string()))?;
    let embedder = build_embedder(config)?;
    let index = load_index(config, &embedder)?;
    let pipeline = build_pipeline(config, embedder)?;
    let verdict = pipeline.classify(&sample, &index).await?;
    let record = VerdictRecord::new(&verdict, trace, trace);
    let json = serde_json::to_string_pretty(&record).expect("verdict record serializes");
    writeln!(out, "{json}").map_err(|e| CliError::Output(e.to_string()))
}

/// `metrics.json`. The timestamp is the first field so it sits alone on
/// the second line of the pretty-printed file.
#[derive(Debug, Serialize)]
struct MetricsFile<'a> {
    generated_at: String,
    dataset: String,
    config: &'a AppConfig,
    metrics: &'a MetricsReport,
}

pub const VERDICTS_FILE: &str = "verdicts.jsonl";
pub const METRICS_FILE: &str = "metrics.json";

pub async fn run_evaluate(
    config: &AppConfig,
    dataset: &Path,
    out_dir: &Path,
    trace: bool,
    force: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let verdicts_path = out_dir.join(VERDICTS_FILE);
    let metrics_path = out_dir.join(METRICS_FILE);
    claim(&verdicts_path, force)?;
    claim(&metrics_path, force)?;
    let samples = read_samples(dataset, true)?;
    let embedder = build_embedder(config)?;
    let index = load_index(config, &embedder)?;
    let pipeline = build_pipeline(config, embedder)?;

    let start = Instant::now();
    let evaluation = evaluate(&pipeline, &samples, &index, config.concurrency).await?;
    let secs = start.elapsed().as_secs_f64();
    let report = &evaluation.report;
    for f in &report.failures {
        log::warn!("sample {} failed: {}", f.id, f.error);
    }

    std::fs::create_dir_all(out_dir).map_err(|e| output_err(out_dir, e))?;
    let mut lines = String::new();
    for v in &evaluation.verdicts {
        lines.push_str(&VerdictRecord::new(v, trace, trace).to_json_line());
        lines.push('\n');
    }
    std::fs::write(&verdicts_path, lines).map_err(|e| output_err(&verdicts_path, e))?;
    let file = MetricsFile {
        generated_at: humantime::format_rfc3339_seconds(SystemTime::now()).to_string(),
        dataset: dataset.display().to_string(),
        config,
        metrics: report,
    };
    let mut json = serde_json::to_string_pretty(&file).expect("metrics serialize");
    json.push('\n');
    std::fs::write(&metrics_path, json).map_err(|e| output_err(&metrics_path, e))?;

    let w = |e: std::io::Error| CliError::Output(e.to_string());
    writeln!(out, "samples: {} (evaluated {}, failed {})", report.samples, report.evaluated, report.failed).map_err(w)?;
    writeln!(out, "accuracy: {:.4}", report.accuracy).map_err(w)?;
    writeln!(out, "macro_f1: {:.4}", report.macro_f1).map_err(w)?;
    let plans: Vec<String> = report
        .plan_distribution
        .iter()
        .map(|(p, n)| format!("{p}={n}"))
        .collect();
    writeln!(out, "plans: {}", plans.join(" ")).map_err(w)?;
    eprintln!(
        "{} samples in {secs:.2} s ({:.2} samples/s); wrote {} and {}",
        report.samples,
        report.samples as f64 / secs.max(1e-9),
        verdicts_path.display(),
        metrics_path.display()
    );
    Ok(())
}

pub async fn run_sweep(
    config: &AppConfig,
    dataset: &Path,
    k_min: usize,
    k_max: usize,
    out_path: Option<&PathBuf>,
    force: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if k_min == 0 || k_min > k_max {
        return Err(CliError::Usage(format!(
            "need 1 <= --k-min <= --k-max, got {k_min}..{k_max}"
        )));
    }
    if let Some(p) = out_path {
        claim(p, force)?;
    }
    let samples = read_samples(dataset, true)?;
    let embedder = build_embedder(config)?;
    let index = load_index(config, &embedder)?;
    let pipeline = build_pipeline(config, embedder)?;
    let ks: Vec<usize> = (k_min..=k_max).collect();
    let rows = sweep_k(&pipeline, &samples, &index, &ks, config.concurrency).await?;
    for row in &rows {
        if let Err(e) = &row.result {
            log::error!("k={} failed: {e}", row.k);
        }
    }
    let csv = sweep_csv(&rows);
    match out_path {
        Some(p) => std::fs::write(p, &csv).map_err(|e| output_err(p, e))?,
        None => out.write_all(csv.as_bytes()).map_err(|e| CliError::Output(e.to_string()))?,
    }
    if rows.iter().all(|r| r.result.is_err()) {
        return Err(CliError::Pipeline("every k failed".into()));
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct TimingLine {
    timings: StageLine,
}

#[derive(Debug, Deserialize)]
struct StageLine {
    retrieval_ms: f64,
    planning_ms: f64,
    agents_ms: f64,
    synthesis_ms: f64,
}

pub const STAGE_NAMES: [&str; 4] = ["retrieval", "planning", "agents", "synthesis"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRow {
    pub stage: &'static str,
    pub mean_ms: f64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingReport {
    pub samples: usize,
    pub stages: Vec<StageRow>,
    pub total_ms: f64,
}

/// Mean per-stage time over the verdicts in `source`, with each stage's
/// share of the summed stage means.
pub fn timing_report(source: &str) -> Result<TimingReport, CliError> {
    let mut sums = [0.0f64; 4];
    let mut n = 0usize;
    for (i, line) in source.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TimingLine =
            serde_json::from_str(line).map_err(|e| CliError::Input(format!("line {}: {e}", i + 1)))?;
        let t = parsed.timings;
        let stages = [t.retrieval_ms, t.planning_ms, t.agents_ms, t.synthesis_ms];
        if let Some(bad) = stages.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(CliError::Input(format!("line {}: invalid stage time {bad}", i + 1)));
        }
        for (s, v) in sums.iter_mut().zip(stages) {
            *s += v;
        }
        n += 1;
    }
    if n == 0 {
        return Err(CliError::Input("no verdicts to summarize".into()));
    }
    let means = sums.map(|s| s / n as f64);
    let total: f64 = means.iter().sum();
    let stages = STAGE_NAMES
        .iter()
        .zip(means)
        .map(|(&stage, mean_ms)| StageRow {
            stage,
            mean_ms,
            percent: if total > 0.0 { 100.0 * mean_ms / total } else { 0.0 },
        })
        .collect();
    Ok(TimingReport {
        samples: n,
        stages,
        total_ms: total,
    })
}

pub fn render_timing_table(r: &TimingReport) -> String {
    let mut s = format!("samples: {}\n{:<10} {:>12} {:>9}\n", r.samples, "stage", "mean_ms", "percent");
    for row in &r.stages {
        s += &format!("{:<10} {:>12.3} {:>9.3}\n", row.stage, row.mean_ms, row.percent);
    }
    let pct = if r.total_ms > 0.0 { 100.0 } else { 0.0 };
    s += &format!("{:<10} {:>12.3} {:>9.3}\n", "total", r.total_ms, pct);
    s
}

pub fn run_timings(path: &Path, json: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let source = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let report = timing_report(&source).map_err(|e| match e {
        CliError::Input(m) => CliError::Input(format!("{}: {m}", path.display())),
        other => other,
    })?;
    let text = if json {
        serde_json::to_string_pretty(&report).expect("timing report serializes") + "\n"
    } else {
        render_timing_table(&report)
    };
    out.write_all(text.as_bytes()).map_err(|e| CliError::Output(e.to_string()))
}
