#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_ramsd");

/// Writes `rows` as JSONL.
pub fn write_jsonl(path: &Path, rows: &[serde_json::Value]) {
    let body: String = rows.iter().map(|r| format!("{r}\n")).collect();
    std::fs::write(path, body).unwrap();
}

/// Knowledge base with `per_class` rows of each label.
pub fn kb(per_class: usize) -> Vec<serde_json::Value> {
    (0..per_class * 2)
        .map(|i| {
            let text = if i % 2 == 0 {
                format!("Oh wonderful, delay number {i}. Best airline ever.")
            } else {
                format!("Flight {i} departs from gate {} at noon.", i + 3)
            };
            serde_json::json!({ "text": text, "label": (i % 2 == 0) as u8 })
        })
        .collect()
}

/// Samples whose text scripts the mock judge to echo the gold label.
pub fn echo_dataset(n: usize) -> Vec<serde_json::Value> {
    (0..n)
        .map(|i| {
            let gold = (i % 3 == 0) as u8;
            serde_json::json!({
                "id": format!("s{i:02}"),
                "text": format!("Sample {i} says something memorable MOCK_LABEL={gold} MOCK_CONF=0.8"),
                "label": gold,
            })
        })
        .collect()
}

/// A scratch directory holding a cache dir, with a mock-backend runner.
pub struct Workspace {
    pub dir: tempfile::TempDir,
}

impl Workspace {
    pub fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn cache(&self) -> PathBuf {
        self.path("cache")
    }

    /// Runs the binary with the mock backend and this workspace's cache.
    pub fn run(&self, args: &[&str]) -> Output {
        self.run_env(args, &[])
    }

    pub fn run_env(&self, args: &[&str], env: &[(&str, &str)]) -> Output {
        let mut cmd = Command::new(BIN);
        for (k, _) in std::env::vars() {
            if k.starts_with("RAMSD_") {
                cmd.env_remove(k);
            }
        }
        cmd.current_dir(self.dir.path())
            .env("RAMSD_BACKEND", "mock")
            .env("RAMSD_CACHE_DIR", self.cache())
            .env("RUST_LOG", "error")
            .args(args);
        for (k, v) in env {
            cmd.env(k, v);
        }
        cmd.output().unwrap()
    }

    /// Writes the knowledge base and ingests it.
    pub fn ingest(&self, per_class: usize) {
        let kb_path = self.path("kb.jsonl");
        write_jsonl(&kb_path, &kb(per_class));
        let out = self.run(&["ingest", kb_path.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}
