//! Output files. Every file starts with (CSV) or contains (JSON) the config
//! hash and code version; wall-clock data go to a separate timing file.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nioc::NiocError;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub code_version: String,
}

impl Provenance {
    /// Hash of the resolved configuration, which must serialize
    /// deterministically (structs and ordered maps only).
    pub fn of<C: Serialize>(command: &str, config: &C) -> Result<Self, NiocError> {
        let body = serde_json::to_string(&json!({ "command": command, "config": config }))?;
        let digest = Sha256::digest(body.as_bytes());
        let config_hash = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self {
            config_hash,
            code_version: CODE_VERSION.to_string(),
        })
    }

    pub fn csv_header(&self) -> String {
        format!("# config_hash={}\n# code_version={}\n", self.config_hash, self.code_version)
    }

    pub fn json(&self) -> Value {
        json!({ "config_hash": self.config_hash, "code_version": self.code_version })
    }
}

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, NiocError> {
        std::fs::create_dir_all(root)
            .map_err(|e| NiocError::Io(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf, NiocError> {
        let p = self.path(name);
        std::fs::write(&p, contents).map_err(|e| NiocError::Io(format!("cannot write {}: {e}", p.display())))?;
        Ok(p)
    }

    pub fn write_json(&self, name: &str, value: &Value) -> Result<PathBuf, NiocError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn write_csv(&self, name: &str, prov: &Provenance, body: &str) -> Result<PathBuf, NiocError> {
        self.write(name, &format!("{}{body}", prov.csv_header()))
    }
}

/// Wall-clock record of one command, written next to its outputs.
pub struct Timing {
    started: Instant,
    started_unix: f64,
    stages: Vec<(String, f64)>,
    last: Instant,
}

impl Timing {
    pub fn start() -> Self {
        let now = Instant::now();
        Self {
            started: now,
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
            stages: Vec::new(),
            last: now,
        }
    }

    pub fn stage(&mut self, name: impl Into<String>) {
        let now = Instant::now();
        self.stages.push((name.into(), (now - self.last).as_secs_f64()));
        self.last = now;
    }

    pub fn add(&mut self, name: impl Into<String>, seconds: f64) {
        self.stages.push((name.into(), seconds));
    }

    pub fn write(&self, out: &OutDir, command: &str) -> Result<PathBuf, NiocError> {
        let stages: Vec<Value> = self.stages.iter().map(|(n, s)| json!({ "stage": n, "seconds": s })).collect();
        out.write_json(
            &format!("{command}.timing.json"),
            &json!({
                "command": command,
                "started_unix": self.started_unix,
                "total_seconds": self.started.elapsed().as_secs_f64(),
                "stages": stages,
            }),
        )
    }
}
