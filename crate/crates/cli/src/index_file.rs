//! On-disk index artifact.
//!
//! JSONL: a header line, then one line per exemplar holding its text and
//! the embedding-cache key of its vector. Vectors themselves stay in the
//! embedding cache.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use ramsd_core::domain::{Exemplar, Label};
use ramsd_core::embedding::{CacheKey, Embedder};
use ramsd_core::retrieval::{build_index, DualIndex};

pub const FORMAT: &str = "ramsd-index";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub provider: String,
    pub model_id: String,
    pub dimension: usize,
    pub rows: usize,
    pub sarcastic: usize,
    pub non_sarcastic: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Entry {
    id: String,
    label: Label,
    text: String,
    key: String,
}

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("no index at {0}; run `ramsd ingest CORPUS` first")]
    NotFound(String),

    #[error("index {path}: {message}")]
    Corrupt { path: String, message: String },

    #[error("index {path} was built with {built}, but the configured embedder is {configured}; re-run `ramsd ingest`")]
    EmbedderChanged {
        path: String,
        built: String,
        configured: String,
    },

    #[error("index {path}: vector for {id} is missing from the embedding cache; re-run `ramsd ingest`")]
    MissingVector { path: String, id: String },

    #[error("cannot write index {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn describe(provider: &str, model: &str, dim: usize) -> String {
    format!("{provider}/{model} ({dim}-dim)")
}

/// Writes the artifact next to `path` and renames it into place.
pub fn write(path: &Path, exemplars: &[Exemplar], embedder: &Embedder) -> Result<Header, IndexError> {
    let provider = embedder.provider();
    let count = |l: Label| exemplars.iter().filter(|e| e.label == l).count();
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        provider: provider.name().into(),
        model_id: provider.model_id().into(),
        dimension: provider.dimension(),
        rows: exemplars.len(),
        sarcastic: count(Label::Sarcastic),
        non_sarcastic: count(Label::NonSarcastic),
    };
    let wrap = |source| IndexError::Write {
        path: path.display().to_string(),
        source,
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for e in exemplars {
        let entry = Entry {
            id: e.id.clone(),
            label: e.label,
            text: e.text.clone(),
            key: embedder.key_for(&e.text).as_str().to_owned(),
        };
        out.push_str(&serde_json::to_string(&entry).expect("entry serializes"));
        out.push('\n');
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(wrap)?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    let mut f = std::fs::File::create(&tmp).map_err(wrap)?;
    f.write_all(out.as_bytes()).map_err(wrap)?;
    f.sync_all().map_err(wrap)?;
    std::fs::rename(&tmp, path).map_err(wrap)?;
    Ok(header)
}

/// Reads the artifact and rebuilds the index from cached vectors.
pub fn load(path: &Path, embedder: &Embedder) -> Result<(Header, DualIndex), IndexError> {
    let shown = path.display().to_string();
    let corrupt = |message: String| IndexError::Corrupt {
        path: shown.clone(),
        message,
    };
    let file = std::fs::File::open(path).map_err(|_| IndexError::NotFound(shown.clone()))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let (_, first) = lines.next().ok_or_else(|| corrupt("empty file".into()))?;
    let first = first.map_err(|e| corrupt(e.to_string()))?;
    let header: Header = serde_json::from_str(&first).map_err(|e| corrupt(format!("bad header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(corrupt(format!(
            "unsupported format {} v{}",
            header.format, header.version
        )));
    }
    let provider = embedder.provider();
    if header.provider != provider.name()
        || header.model_id != provider.model_id()
        || header.dimension != provider.dimension()
    {
        return Err(IndexError::EmbedderChanged {
            path: shown,
            built: describe(&header.provider, &header.model_id, header.dimension),
            configured: describe(provider.name(), provider.model_id(), provider.dimension()),
        });
    }

    let mut exemplars = Vec::with_capacity(header.rows);
    for (i, line) in lines {
        let line = line.map_err(|e| corrupt(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: Entry =
            serde_json::from_str(&line).map_err(|e| corrupt(format!("line {}: {e}", i + 1)))?;
        let key = CacheKey::from_hex(&entry.key).ok_or_else(|| corrupt(format!("line {}: bad cache key", i + 1)))?;
        let embedding = embedder
            .cache()
            .get(&key)
            .ok_or_else(|| IndexError::MissingVector {
                path: shown.clone(),
                id: entry.id.clone(),
            })?;
        exemplars.push(Exemplar {
            id: entry.id,
            text: entry.text,
            label: entry.label,
            embedding,
        });
    }
    if exemplars.len() != header.rows {
        return Err(corrupt(format!(
            "header says {} rows, found {}",
            header.rows,
            exemplars.len()
        )));
    }
    let index = build_index(exemplars).map_err(|e| corrupt(e.to_string()))?;
    Ok((header, index))
}
