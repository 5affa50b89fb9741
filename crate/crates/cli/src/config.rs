//! Layered configuration: flag > environment > config file > default.
//!
//! The file is TOML. Top-level keys mirror [`AppConfig`]; pipeline knobs
//! live in a `[pipeline]` table:
//!
//! ```toml
//! backend = "mock"
//! seed = 7
//! cache_dir = ".ramsd"
//!
//! [pipeline]
//! k = 5
//! ```
//!
//! API keys are never read from the file or from flags; `api_key_env`
//! names the environment variable that holds the key.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use ramsd_core::pipeline::{PipelineConfig, TimingMode};

pub const CONFIG_ENV: &str = "RAMSD_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    /// Offline feature-hashing embedder.
    Hashing,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppConfig {
    pub backend: BackendKind,
    pub base_url: String,
    pub api_key_env: String,
    pub chat_model: String,
    pub embedder: EmbedderKind,
    pub embed_model: String,
    pub embed_dimension: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    pub cache_dir: PathBuf,
    pub templates_dir: Option<PathBuf>,
    pub seed: u64,
    pub concurrency: usize,
    pub timing: TimingMode,
    pub pipeline: PipelineConfig,
}

impl AppConfig {
    pub fn index_path(&self) -> PathBuf {
        self.cache_dir.join("index.jsonl")
    }

    pub fn embedding_cache_path(&self) -> PathBuf {
        self.cache_dir.join("embeddings.bin")
    }

    pub fn rationale_cache_path(&self) -> PathBuf {
        self.cache_dir.join("rationales.jsonl")
    }
}

/// One source of settings. Unset fields defer to the next layer down.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub backend: Option<BackendKind>,
    pub base_url: Option<String>,
    pub api_key_env: Option<String>,
    pub chat_model: Option<String>,
    pub embedder: Option<EmbedderKind>,
    pub embed_model: Option<String>,
    pub embed_dimension: Option<usize>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub cache_dir: Option<PathBuf>,
    pub templates_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub concurrency: Option<usize>,
    pub timing: Option<TimingMode>,
    /// Only `k` can be overridden above the file layer.
    pub k: Option<usize>,
    pub pipeline: Option<toml::Table>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

const SECRET_KEYS: [&str; 3] = ["api_key", "key", "token"];

impl ConfigLayer {
    pub fn parse_toml(source: &str, origin: &Path) -> Result<Self, ConfigError> {
        let table: toml::Table =
            toml::from_str(source).map_err(|e| err(format!("{}: {e}", origin.display())))?;
        if let Some(key) = SECRET_KEYS.iter().find(|k| table.contains_key(**k)) {
            return Err(err(format!(
                "{}: `{key}` is not allowed in config files; put the secret in the environment \
                 variable named by api_key_env",
                origin.display()
            )));
        }
        if table.contains_key("k") {
            return Err(err(format!("{}: set k inside the [pipeline] table", origin.display())));
        }
        table
            .try_into()
            .map_err(|e: toml::de::Error| err(format!("{}: {e}", origin.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path)
            .map_err(|e| err(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse_toml(&source, path)
    }

    /// Reads `RAMSD_*` variables through `lookup`.
    pub fn from_env(lookup: &dyn Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let get = |name: &str| lookup(name).filter(|v| !v.trim().is_empty());
        Ok(Self {
            backend: get("RAMSD_BACKEND").map(|v| parse_enum("RAMSD_BACKEND", &v)).transpose()?,
            base_url: get("RAMSD_BASE_URL"),
            api_key_env: get("RAMSD_API_KEY_ENV"),
            chat_model: get("RAMSD_CHAT_MODEL"),
            embedder: get("RAMSD_EMBEDDER").map(|v| parse_embedder("RAMSD_EMBEDDER", &v)).transpose()?,
            embed_model: get("RAMSD_EMBED_MODEL"),
            embed_dimension: get("RAMSD_EMBED_DIMENSION").map(|v| parse_num("RAMSD_EMBED_DIMENSION", &v)).transpose()?,
            temperature: get("RAMSD_TEMPERATURE").map(|v| parse_num("RAMSD_TEMPERATURE", &v)).transpose()?,
            max_tokens: get("RAMSD_MAX_TOKENS").map(|v| parse_num("RAMSD_MAX_TOKENS", &v)).transpose()?,
            cache_dir: get("RAMSD_CACHE_DIR").map(PathBuf::from),
            templates_dir: get("RAMSD_TEMPLATES_DIR").map(PathBuf::from),
            seed: get("RAMSD_SEED").map(|v| parse_num("RAMSD_SEED", &v)).transpose()?,
            concurrency: get("RAMSD_CONCURRENCY").map(|v| parse_num("RAMSD_CONCURRENCY", &v)).transpose()?,
            timing: get("RAMSD_TIMING").map(|v| parse_timing("RAMSD_TIMING", &v)).transpose()?,
            k: get("RAMSD_K").map(|v| parse_num("RAMSD_K", &v)).transpose()?,
            pipeline: None,
        })
    }

    /// Fields set in `self` win over `lower`.
    fn over(self, lower: Self) -> Self {
        Self {
            backend: self.backend.or(lower.backend),
            base_url: self.base_url.or(lower.base_url),
            api_key_env: self.api_key_env.or(lower.api_key_env),
            chat_model: self.chat_model.or(lower.chat_model),
            embedder: self.embedder.or(lower.embedder),
            embed_model: self.embed_model.or(lower.embed_model),
            embed_dimension: self.embed_dimension.or(lower.embed_dimension),
            temperature: self.temperature.or(lower.temperature),
            max_tokens: self.max_tokens.or(lower.max_tokens),
            cache_dir: self.cache_dir.or(lower.cache_dir),
            templates_dir: self.templates_dir.or(lower.templates_dir),
            seed: self.seed.or(lower.seed),
            concurrency: self.concurrency.or(lower.concurrency),
            timing: self.timing.or(lower.timing),
            k: self.k.or(lower.k),
            pipeline: self.pipeline.or(lower.pipeline),
        }
    }
}

fn parse_num<T: FromStr>(name: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| err(format!("{name}={value:?}: {e}")))
}

fn parse_enum(name: &str, value: &str) -> Result<BackendKind, ConfigError> {
    BackendKind::from_str(value.trim(), true).map_err(|_| err(format!("{name}={value:?}: expected remote or mock")))
}

fn parse_embedder(name: &str, value: &str) -> Result<EmbedderKind, ConfigError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "hashing" => Ok(EmbedderKind::Hashing),
        "remote" => Ok(EmbedderKind::Remote),
        _ => Err(err(format!("{name}={value:?}: expected hashing or remote"))),
    }
}

fn parse_timing(name: &str, value: &str) -> Result<TimingMode, ConfigError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "wall_clock" => Ok(TimingMode::WallClock),
        "reported_latency" => Ok(TimingMode::ReportedLatency),
        _ => Err(err(format!("{name}={value:?}: expected wall_clock or reported_latency"))),
    }
}

pub const HASHING_DIMENSION: usize = 64;
pub const REMOTE_DIMENSION: usize = 3072;

/// Merges the layers and fills in defaults. Some defaults depend on the
/// backend: the mock backend pairs with the hashing embedder and
/// latency-derived timings so that runs are reproducible.
pub fn resolve(flags: ConfigLayer, env: ConfigLayer, file: ConfigLayer) -> Result<AppConfig, ConfigError> {
    let merged = flags.over(env.over(file));
    let backend = merged.backend.unwrap_or(BackendKind::Remote);
    let mock = backend == BackendKind::Mock;
    let embedder = merged
        .embedder
        .unwrap_or(if mock { EmbedderKind::Hashing } else { EmbedderKind::Remote });
    let embed_dimension = merged.embed_dimension.unwrap_or(match embedder {
        EmbedderKind::Hashing => HASHING_DIMENSION,
        EmbedderKind::Remote => REMOTE_DIMENSION,
    });
    let seed = merged.seed.unwrap_or(0);

    let mut pipeline: PipelineConfig = match merged.pipeline {
        Some(table) => table
            .try_into()
            .map_err(|e: toml::de::Error| err(format!("[pipeline]: {e}")))?,
        None => PipelineConfig::default(),
    };
    if let Some(k) = merged.k {
        pipeline.k = k;
    }
    pipeline.seed = seed;
    pipeline.validate().map_err(|e| err(e.to_string()))?;

    let config = AppConfig {
        backend,
        base_url: merged.base_url.unwrap_or_else(|| "https://api.openai.com/v1".into()),
        api_key_env: merged.api_key_env.unwrap_or_else(|| "RAMSD_API_KEY".into()),
        chat_model: merged.chat_model.unwrap_or_else(|| "gpt-4o".into()),
        embedder,
        embed_model: merged.embed_model.unwrap_or_else(|| "text-embedding-3-large".into()),
        embed_dimension,
        temperature: merged.temperature.unwrap_or(0.1),
        max_tokens: merged.max_tokens.unwrap_or(512),
        cache_dir: merged.cache_dir.unwrap_or_else(|| PathBuf::from(".ramsd")),
        templates_dir: merged.templates_dir,
        seed,
        concurrency: merged.concurrency.unwrap_or(4),
        timing: merged
            .timing
            .unwrap_or(if mock { TimingMode::ReportedLatency } else { TimingMode::WallClock }),
        pipeline,
    };
    check(&config)?;
    Ok(config)
}

fn check(c: &AppConfig) -> Result<(), ConfigError> {
    if c.embed_dimension == 0 {
        return Err(err("embed_dimension must be positive"));
    }
    if c.max_tokens == 0 {
        return Err(err("max_tokens must be positive"));
    }
    if c.concurrency == 0 {
        return Err(err("concurrency must be at least 1"));
    }
    if !(0.0..=2.0).contains(&c.temperature) {
        return Err(err(format!("temperature {} is outside [0, 2]", c.temperature)));
    }
    let remote_used = c.backend == BackendKind::Remote || c.embedder == EmbedderKind::Remote;
    if remote_used {
        if !(c.base_url.starts_with("http://") || c.base_url.starts_with("https://")) {
            return Err(err(format!("base_url {:?} is not an http(s) URL", c.base_url)));
        }
        if c.api_key_env.trim().is_empty() {
            return Err(err("api_key_env is empty"));
        }
    }
    Ok(())
}
