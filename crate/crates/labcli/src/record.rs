//! Run records: the self-contained JSON written next to every run's CSVs,
//! and bit-exact replay from one.

use std::collections::BTreeMap;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use actlab::datagen::DatasetSpec;

use crate::commands::{self, Outcome};
use crate::config::CommandConfig;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const RECORD_FILE: &str = "record.json";
/// Label pattern of the per-(dataset, seed) training streams.
pub const TRAINING_STREAMS: &str = "train/{dataset}/{seed_index}";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub base: u64,
    /// Seed of every dataset spec, in run order.
    pub datasets: Vec<u64>,
    pub eval_seeds: usize,
    pub training_streams: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactHash {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub tool_version: String,
    pub created_utc: String,
    pub config: CommandConfig,
    pub seeds: Seeds,
    pub datasets: Vec<DatasetSpec>,
    pub results: serde_json::Value,
    /// Seconds per phase. Never written to any CSV.
    pub wall_times: BTreeMap<String, f64>,
    pub artifacts: Vec<ArtifactHash>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

impl RunRecord {
    pub fn new(config: CommandConfig, datasets: Vec<DatasetSpec>, outcome: &Outcome) -> Self {
        let seeds = Seeds {
            base: config.common().seed,
            datasets: datasets.iter().map(|d| d.seed).collect(),
            eval_seeds: config.eval_seeds(),
            training_streams: TRAINING_STREAMS.to_string(),
        };
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_utc: now_stamp(),
            config,
            seeds,
            datasets,
            results: outcome.results.clone(),
            wall_times: outcome.wall_times.clone(),
            artifacts: outcome
                .artifacts
                .iter()
                .map(|a| ArtifactHash {
                    file: a.name.clone(),
                    sha256: sha256_hex(a.contents.as_bytes()),
                    bytes: a.contents.len(),
                })
                .collect(),
        }
    }

    /// Directory name `<timestamp>-<first 8 hex of the config hash>`.
    pub fn run_id(&self) -> String {
        let cfg = serde_json::to_string(&self.config).expect("config serializes");
        format!("{}-{}", self.created_utc, &sha256_hex(cfg.as_bytes())[..8])
    }
}

fn now_stamp() -> String {
    let fmt = time::macros::format_description!("[year][month][day]T[hour][minute][second]Z");
    time::OffsetDateTime::now_utc()
        .format(fmt)
        .expect("timestamp formats")
}

/// Write the artifacts and the record into a fresh `out_dir/<run id>/`.
/// Fails if that directory already exists; nothing earlier is touched.
pub fn persist(out_dir: &Path, record: &RunRecord, outcome: &Outcome) -> Result<PathBuf, CliError> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let dir = out_dir.join(record.run_id());
    match fs::create_dir(&dir) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::AlreadyExists => return Err(CliError::RunDirExists(dir)),
        Err(e) => return Err(CliError::io(&dir, e)),
    }
    for a in &outcome.artifacts {
        let path = dir.join(&a.name);
        fs::write(&path, &a.contents).map_err(|e| CliError::io(&path, e))?;
    }
    let path = dir.join(RECORD_FILE);
    let json = serde_json::to_string_pretty(record).expect("record serializes");
    fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(dir)
}

/// Resolve a run directory or a record file to the record path.
pub fn record_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(RECORD_FILE)
    } else {
        path.to_path_buf()
    }
}

/// Read a record, checking the schema version before anything else.
pub fn load(path: &Path) -> Result<RunRecord, CliError> {
    let path = record_path(path);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::BadRecord(format!("{}: {e}", path.display())))?;
    let found = value.get("schema_version").and_then(|v| v.as_u64());
    if found != Some(SCHEMA_VERSION as u64) {
        return Err(CliError::SchemaVersionMismatch {
            found: found.map(|v| v.to_string()).unwrap_or_else(|| "missing".into()),
            expected: SCHEMA_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| CliError::BadRecord(format!("{}: {e}", path.display())))
}

/// What a replay compared.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub record: RunRecord,
    pub outcome: Outcome,
    /// `(file, sha256)` of every regenerated artifact, all matching.
    pub matched: Vec<(String, String)>,
    /// Files next to the record that were also checked.
    pub on_disk_checked: usize,
}

/// Re-run the command a record describes, on the record's own dataset
/// specs, and compare every artifact hash and the numeric results.
pub fn replay(path: &Path, progress: &mut dyn FnMut(&str)) -> Result<ReplayReport, CliError> {
    let record = load(path)?;
    let dir = record_path(path).parent().map(Path::to_path_buf).unwrap_or_default();
    let mut on_disk_checked = 0;
    for a in &record.artifacts {
        let file = dir.join(&a.file);
        if let Ok(bytes) = fs::read(&file) {
            on_disk_checked += 1;
            let got = sha256_hex(&bytes);
            if got != a.sha256 {
                return Err(CliError::HashMismatch {
                    file: format!("{} (on disk)", a.file),
                    recorded: a.sha256.clone(),
                    replayed: got,
                });
            }
        }
    }
    let outcome = commands::execute(&record.config, &record.datasets, progress)?;
    let mut matched = Vec::new();
    let mut produced: BTreeMap<&str, String> = outcome
        .artifacts
        .iter()
        .map(|a| (a.name.as_str(), sha256_hex(a.contents.as_bytes())))
        .collect();
    for a in &record.artifacts {
        let got = produced.remove(a.file.as_str()).unwrap_or_else(|| "(not produced)".into());
        if got != a.sha256 {
            return Err(CliError::HashMismatch {
                file: a.file.clone(),
                recorded: a.sha256.clone(),
                replayed: got,
            });
        }
        matched.push((a.file.clone(), got));
    }
    if let Some((file, got)) = produced.into_iter().next() {
        return Err(CliError::HashMismatch {
            file: file.to_string(),
            recorded: "(not recorded)".into(),
            replayed: got,
        });
    }
    if outcome.results != record.results {
        return Err(CliError::ResultsMismatch(json_diff(&record.results, &outcome.results)));
    }
    Ok(ReplayReport {
        record,
        outcome,
        matched,
        on_disk_checked,
    })
}

/// First differing path between two JSON values.
fn json_diff(a: &serde_json::Value, b: &serde_json::Value) -> String {
    use serde_json::Value;
    fn walk(a: &Value, b: &Value, at: String) -> Option<String> {
        match (a, b) {
            (Value::Object(x), Value::Object(y)) => {
                for (k, va) in x {
                    match y.get(k) {
                        Some(vb) => {
                            if let Some(d) = walk(va, vb, format!("{at}.{k}")) {
                                return Some(d);
                            }
                        }
                        None => return Some(format!("{at}.{k}: missing on replay")),
                    }
                }
                y.keys()
                    .find(|k| !x.contains_key(*k))
                    .map(|k| format!("{at}.{k}: not recorded"))
            }
            (Value::Array(x), Value::Array(y)) if x.len() == y.len() => x
                .iter()
                .zip(y)
                .enumerate()
                .find_map(|(i, (va, vb))| walk(va, vb, format!("{at}[{i}]"))),
            _ if a == b => None,
            _ => Some(format!("{at}: recorded {a}, replayed {b}")),
        }
    }
    walk(a, b, "results".into()).unwrap_or_else(|| "results differ".into())
}
