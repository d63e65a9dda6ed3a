//! Run configuration: a JSON file merged with command-line flags, flags
//! taking precedence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nioc::envs::{TaskConfig, TaskId};
use nioc::inference::Method;
use nioc::model::{NamedValues, Variant};
use nioc::NiocError;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;
pub const SEED_ENV: &str = "NIOC_SEED";

/// Every key a configuration file may contain. All keys are optional; the
/// subcommand decides which ones it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: Option<u32>,
    pub task: Option<String>,
    pub variant: Option<String>,
    pub method: Option<String>,
    pub methods: Option<Vec<String>>,
    pub theta: Option<NamedValues>,
    /// Sampling ranges by parameter name, as [lo, hi].
    pub ranges: Option<BTreeMap<String, [f64; 2]>>,
    pub n_datasets: Option<usize>,
    pub n_traj: Option<usize>,
    pub horizon: Option<usize>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub restarts: Option<usize>,
    pub target: Option<usize>,
    pub c_grid: Option<Vec<f64>>,
    pub sigma: Option<f64>,
    pub p: Option<f64>,
    pub include_controls: Option<bool>,
    pub out: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, NiocError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NiocError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ConfigFile =
            serde_json::from_str(&text).map_err(|e| NiocError::Json(format!("config {}: {e}", path.display())))?;
        if let Some(v) = cfg.schema_version {
            if v != SCHEMA_VERSION {
                return Err(NiocError::InvalidInput(format!(
                    "config schema version {v} is not supported (expected {SCHEMA_VERSION})"
                )));
            }
        }
        Ok(cfg)
    }
}

pub fn parse_task(s: &str) -> Result<TaskId, NiocError> {
    s.parse()
}

pub fn parse_variant(s: &str) -> Result<Variant, NiocError> {
    s.parse()
}

pub fn parse_method(s: &str) -> Result<Method, NiocError> {
    s.parse()
}

/// `name=value,name=value`.
pub fn parse_named(s: &str) -> Result<NamedValues, NiocError> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| NiocError::InvalidInput(format!("expected name=value, got '{part}'")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| NiocError::InvalidInput(format!("'{v}' is not a number (in '{part}')")))?;
        out.push((k.trim().to_string(), v));
    }
    Ok(NamedValues(out))
}

/// `name=lo:hi,name=lo:hi`.
pub fn parse_ranges(s: &str) -> Result<BTreeMap<String, [f64; 2]>, NiocError> {
    let mut out = BTreeMap::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || NiocError::InvalidInput(format!("expected name=lo:hi, got '{part}'"));
        let (k, v) = part.split_once('=').ok_or_else(bad)?;
        let (lo, hi) = v.split_once(':').ok_or_else(bad)?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        out.insert(k.trim().to_string(), [lo, hi]);
    }
    Ok(out)
}

pub fn parse_list(s: &str) -> Vec<String> {
    s.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect()
}

pub fn parse_grid(s: &str) -> Result<Vec<f64>, NiocError> {
    parse_list(s)
        .iter()
        .map(|v| v.parse().map_err(|_| NiocError::InvalidInput(format!("'{v}' is not a number"))))
        .collect()
}

/// Seed from the flag, then the config file, then `NIOC_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64, NiocError> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| NiocError::InvalidInput(format!("{SEED_ENV}='{v}' is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

/// Task settings recorded with datasets so fits can rebuild the same model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskSettings {
    pub alpha: Option<f64>,
    pub horizon: Option<usize>,
    pub target: Option<usize>,
}

impl From<&TaskSettings> for TaskConfig {
    fn from(s: &TaskSettings) -> Self {
        TaskConfig {
            alpha: s.alpha,
            horizon: s.horizon,
            target: s.target,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_values_keep_order() {
        let v = parse_named("sigma=0.2, c=0,p=-0.5").unwrap();
        assert_eq!(
            v.0,
            vec![("sigma".into(), 0.2), ("c".into(), 0.0), ("p".into(), -0.5)]
        );
        assert!(parse_named("sigma").is_err());
        assert!(parse_named("sigma=x").is_err());
    }

    #[test]
    fn ranges_parse() {
        let r = parse_ranges("c_a=0.01:1,sigma_m=0.1:0.5").unwrap();
        assert_eq!(r["c_a"], [0.01, 1.0]);
        assert_eq!(r["sigma_m"], [0.1, 0.5]);
        assert!(parse_ranges("c_a=0.01").is_err());
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(serde_json::from_str::<ConfigFile>(r#"{"tsak": "pendulum"}"#).is_err());
        let cfg: ConfigFile = serde_json::from_str(r#"{"task": "pendulum", "theta": {"c_a": 0.5}}"#).unwrap();
        assert_eq!(cfg.task.as_deref(), Some("pendulum"));
    }

    #[test]
    fn schema_file_lists_every_key() {
        let schema: serde_json::Value = serde_json::from_str(include_str!("../../../docs/config.schema.json")).unwrap();
        let mut documented: Vec<String> = schema["properties"].as_object().unwrap().keys().cloned().collect();
        let mut accepted: Vec<String> = serde_json::to_value(ConfigFile::default())
            .unwrap()
            .as_object()
            .unwrap()
            .keys()
            .cloned()
            .collect();
        documented.sort();
        accepted.sort();
        assert_eq!(documented, accepted);
        assert_eq!(schema["properties"]["schema_version"]["const"], SCHEMA_VERSION);
    }

    #[test]
    fn flag_seed_wins() {
        assert_eq!(resolve_seed(Some(3), Some(5)).unwrap(), 3);
        assert_eq!(resolve_seed(None, Some(5)).unwrap(), 5);
    }
}
