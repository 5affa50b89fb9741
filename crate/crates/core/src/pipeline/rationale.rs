use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::future::Future;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::OnceCell;

use crate::domain::Exemplar;

/// A generated rationale and the latency reported when it was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedRationale {
    pub rationale: String,
    pub latency_ms: f64,
}

#[derive(Serialize, Deserialize)]
struct Record {
    key: String,
    #[serde(flatten)]
    value: CachedRationale,
}

/// Rationales keyed by (exemplar id, model, exemplar label and text).
///
/// Concurrent requests for the same key share one generation; failed
/// generations are not cached. With a backing file every new entry is
/// appended as a JSON line.
pub struct RationaleCache {
    entries: Mutex<HashMap<String, Arc<OnceCell<CachedRationale>>>>,
    file: Option<(PathBuf, Mutex<File>)>,
    generated: AtomicUsize,
}

impl RationaleCache {
    pub fn in_memory() -> Self {
        Self {
            entries: Mutex::new(HashMap::new()),
            file: None,
            generated: AtomicUsize::new(0),
        }
    }

    /// Opens or creates a JSONL cache file. Lines that fail to parse (such
    /// as a torn final write) are skipped.
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut entries = HashMap::new();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Record>(&line) {
                    Ok(r) => {
                        entries
                            .entry(r.key)
                            .or_insert_with(|| Arc::new(OnceCell::new_with(Some(r.value))));
                    }
                    Err(e) => log::warn!("{}:{}: skipping rationale record: {e}", path.display(), i + 1),
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        // A torn last line would otherwise swallow the next record.
        if std::fs::metadata(&path)?.len() > 0 && !std::fs::read(&path)?.ends_with(b"\n") {
            file.write_all(b"\n")?;
        }
        Ok(Self {
            entries: Mutex::new(entries),
            file: Some((path, Mutex::new(file))),
            generated: AtomicUsize::new(0),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn key(exemplar: &Exemplar, model_id: &str) -> String {
        let mut h = Sha256::new();
        for part in [
            model_id.as_bytes(),
            exemplar.id.as_bytes(),
            &[exemplar.label.as_u8()],
            exemplar.text.as_bytes(),
        ] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part);
        }
        hex::encode(h.finalize())
    }

    pub fn len(&self) -> usize {
        self.entries
            .lock()
            .unwrap()
            .values()
            .filter(|c| c.initialized())
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of rationales generated (not served from cache) so far.
    pub fn generated_count(&self) -> usize {
        self.generated.load(Ordering::Relaxed)
    }

    pub fn get(&self, key: &str) -> Option<CachedRationale> {
        self.entries.lock().unwrap().get(key)?.get().cloned()
    }

    /// Returns the cached value for `key`, running `generate` on a miss.
    pub async fn get_or_generate<F, Fut, E>(&self, key: &str, generate: F) -> Result<CachedRationale, E>
    where
        F: FnOnce() -> Fut,
        Fut: Future<Output = Result<CachedRationale, E>>,
    {
        let cell = self
            .entries
            .lock()
            .unwrap()
            .entry(key.to_owned())
            .or_default()
            .clone();
        cell.get_or_try_init(|| async {
            let value = generate().await?;
            self.generated.fetch_add(1, Ordering::Relaxed);
            self.persist(key, &value);
            Ok(value)
        })
        .await
        .cloned()
    }

    fn persist(&self, key: &str, value: &CachedRationale) {
        let Some((path, file)) = &self.file else {
            return;
        };
        let record = Record {
            key: key.to_owned(),
            value: value.clone(),
        };
        let mut line = serde_json::to_string(&record).expect("record serializes");
        line.push('\n');
        if let Err(e) = file.lock().unwrap().write_all(line.as_bytes()) {
            log::warn!("cannot append to rationale cache {}: {e}", path.display());
        }
    }
}
