//! Append-only embedding cache.
//!
//! On-disk record layout, repeated until end of file:
//!
//! ```text
//! [64 bytes ASCII hex sha256 key][u32 LE dimension][dimension x f32 LE]
//! ```
//!
//! A trailing partial record (interrupted write) is discarded on open and
//! the file truncated back to the last complete record.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use sha2::{Digest, Sha256};

const KEY_LEN: usize = 64;

/// Hex sha256 of `(provider name, model id, text)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn new(provider: &str, model_id: &str, text: &str) -> Self {
        let mut h = Sha256::new();
        for part in [provider, model_id, text] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        CacheKey(hex::encode(h.finalize()))
    }

    /// Accepts a 64-char lowercase hex string.
    pub fn from_hex(s: &str) -> Option<Self> {
        (s.len() == KEY_LEN && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')))
            .then(|| CacheKey(s.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

pub struct EmbeddingCache {
    entries: RwLock<HashMap<CacheKey, Arc<Vec<f32>>>>,
    file: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self {
            entries: RwLock::new(HashMap::new()),
            file: None,
            path: None,
        }
    }

    /// Opens (or creates) a cache file and loads every complete record.
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let (entries, good) = decode_records(&bytes);
        if good < bytes.len() {
            log::warn!(
                "{}: discarding {} trailing bytes of a partial record",
                path.display(),
                bytes.len() - good
            );
            file.set_len(good as u64)?;
        }
        Ok(Self {
            entries: RwLock::new(entries),
            file: Some(Mutex::new(file)),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.entries.read().unwrap().contains_key(key)
    }

    pub fn get(&self, key: &CacheKey) -> Option<Vec<f32>> {
        self.entries.read().unwrap().get(key).map(|v| v.as_ref().clone())
    }

    /// Stores a vector. Existing keys are left untouched so a hit always
    /// returns the first stored bits.
    pub fn insert(&self, key: &CacheKey, vector: &[f32]) -> io::Result<()> {
        if self.contains(key) {
            return Ok(());
        }
        if let Some(file) = &self.file {
            let mut file = file.lock().unwrap();
            // re-check under the write lock
            if self.contains(key) {
                return Ok(());
            }
            file.write_all(&encode_record(key, vector))?;
            file.flush()?;
        }
        self.entries
            .write()
            .unwrap()
            .entry(key.clone())
            .or_insert_with(|| Arc::new(vector.to_vec()));
        Ok(())
    }
}

fn encode_record(key: &CacheKey, vector: &[f32]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(KEY_LEN + 4 + 4 * vector.len());
    buf.extend_from_slice(key.as_str().as_bytes());
    buf.extend_from_slice(&(vector.len() as u32).to_le_bytes());
    for x in vector {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    buf
}

/// Returns the decoded entries and the byte length of the valid prefix.
fn decode_records(bytes: &[u8]) -> (HashMap<CacheKey, Arc<Vec<f32>>>, usize) {
    let mut entries = HashMap::new();
    let mut pos = 0;
    while pos + KEY_LEN + 4 <= bytes.len() {
        let Some(key) = std::str::from_utf8(&bytes[pos..pos + KEY_LEN])
            .ok()
            .and_then(CacheKey::from_hex)
        else {
            break;
        };
        let dim_bytes: [u8; 4] = bytes[pos + KEY_LEN..pos + KEY_LEN + 4].try_into().unwrap();
        let dim = u32::from_le_bytes(dim_bytes) as usize;
        let start = pos + KEY_LEN + 4;
        let end = start + 4 * dim;
        if end > bytes.len() {
            break;
        }
        let vector: Vec<f32> = bytes[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.entry(key).or_insert_with(|| Arc::new(vector));
        pos = end;
    }
    (entries, pos)
}
