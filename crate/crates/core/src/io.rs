//! File formats: the `t,arm,reward` log CSV, its JSON sidecar, and atomic
//! writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;
use thiserror::Error;

use crate::policies::PolicySpec;
use crate::simulator::{BanditLog, World};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Metadata or configuration that does not describe a valid experiment.
    #[error("{0}")]
    Config(String),
    /// Malformed or inconsistent data.
    #[error("{0}")]
    Data(String),
}

fn io_error(path: &Path, source: std::io::Error) -> IoError {
    IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| io_error(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_error(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_error(path, e))?;
    tmp.persist(path).map_err(|e| io_error(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| IoError::Data(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Serializes records to CSV with a header row.
pub fn csv_bytes<T: Serialize>(records: &[T]) -> Result<Vec<u8>, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).map_err(|e| IoError::Data(e.to_string()))?;
    }
    w.into_inner().map_err(|e| IoError::Data(e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
struct LogRow {
    t: usize,
    arm: usize,
    reward: f64,
}

/// JSON sidecar of a log CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMeta {
    #[serde(rename = "K")]
    pub arms: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub policy: PolicySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub world: World,
}

impl LogMeta {
    pub fn of(log: &BanditLog) -> Self {
        Self {
            arms: log.arms(),
            horizon: log.horizon(),
            policy: log.policy().clone(),
            seed: log.seed(),
            world: log.world(),
        }
    }

    /// Parses a sidecar, naming the offending field on failure.
    pub fn from_json(text: &str) -> Result<Self, IoError> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| IoError::Config(format!("metadata is not valid JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| IoError::Config("metadata must be a JSON object".into()))?;
        let field = |name: &str| {
            obj.get(name)
                .cloned()
                .ok_or_else(|| IoError::Config(format!("metadata field `{name}` is missing")))
        };
        fn parse<T: serde::de::DeserializeOwned>(
            name: &str,
            v: serde_json::Value,
        ) -> Result<T, IoError> {
            serde_json::from_value(v)
                .map_err(|e| IoError::Config(format!("metadata field `{name}`: {e}")))
        }
        let seed = match obj.get("seed") {
            None | Some(serde_json::Value::Null) => None,
            Some(v) => Some(parse("seed", v.clone())?),
        };
        let world = match obj.get("world") {
            None => World::Real,
            Some(v) => parse("world", v.clone())?,
        };
        Ok(Self {
            arms: parse("K", field("K")?)?,
            horizon: parse("T", field("T")?)?,
            policy: parse("policy", field("policy")?)?,
            seed,
            world,
        })
    }
}

/// The log as `t,arm,reward` CSV with 1-based rounds and arms.
pub fn log_csv(log: &BanditLog) -> Result<Vec<u8>, IoError> {
    let rows: Vec<LogRow> = log
        .actions()
        .iter()
        .zip(log.rewards())
        .enumerate()
        .map(|(t, (&a, &r))| LogRow {
            t: t + 1,
            arm: a + 1,
            reward: r,
        })
        .collect();
    csv_bytes(&rows)
}

/// Writes `path` and its sidecar `<stem>.meta.json`; returns the sidecar path.
pub fn write_log(path: &Path, log: &BanditLog) -> Result<PathBuf, IoError> {
    let meta_path = meta_path_for(path);
    write_atomic(path, &log_csv(log)?)?;
    write_json(&meta_path, &LogMeta::of(log))?;
    Ok(meta_path)
}

/// `log.csv` → `log.meta.json`.
pub fn meta_path_for(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.meta.json"))
}

/// Parses log CSV text against its metadata.
pub fn parse_log(csv_text: &[u8], meta: &LogMeta) -> Result<BanditLog, IoError> {
    let mut reader = csv::Reader::from_reader(csv_text);
    let headers = reader
        .headers()
        .map_err(|e| IoError::Data(format!("log CSV: {e}")))?;
    if headers != vec!["t", "arm", "reward"] {
        return Err(IoError::Data(format!(
            "log CSV header must be `t,arm,reward`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    for (i, row) in reader.deserialize::<LogRow>().enumerate() {
        let row = row.map_err(|e| IoError::Data(format!("log CSV: {e}")))?;
        if row.t != i + 1 {
            return Err(IoError::Data(format!(
                "log CSV row {} has t = {}, expected {}",
                i + 1,
                row.t,
                i + 1
            )));
        }
        if row.arm == 0 || row.arm > meta.arms {
            return Err(IoError::Data(format!(
                "log CSV row {} has arm {} outside 1..={}",
                i + 1,
                row.arm,
                meta.arms
            )));
        }
        actions.push(row.arm - 1);
        rewards.push(row.reward);
    }
    BanditLog::new(
        meta.arms,
        meta.horizon,
        actions,
        rewards,
        meta.policy.clone(),
        meta.seed,
        meta.world,
    )
    .map_err(|e| IoError::Data(e.to_string()))
}

pub fn read_meta(path: &Path) -> Result<LogMeta, IoError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    LogMeta::from_json(&text).map_err(|e| match e {
        IoError::Config(msg) => IoError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn read_log(csv_path: &Path, meta_path: &Path) -> Result<BanditLog, IoError> {
    let meta = read_meta(meta_path)?;
    let bytes = fs::read(csv_path).map_err(|e| io_error(csv_path, e))?;
    parse_log(&bytes, &meta)
}
