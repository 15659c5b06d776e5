//! Append-only JSONL results store.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::metrics::MetricSet;

pub const SCHEMA_VERSION: u32 = 1;
pub const RESULTS_FILE: &str = "results.jsonl";
pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub experiment: String,
    pub scenario_hash: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<Vec<i64>>,
    pub metrics: MetricSet,
    pub day_reports_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordKey {
    pub experiment: String,
    pub scenario_hash: String,
    pub seed: u64,
}

impl ResultRecord {
    pub fn key(&self) -> RecordKey {
        RecordKey { experiment: self.experiment.clone(), scenario_hash: self.scenario_hash.clone(), seed: self.seed }
    }
}

#[derive(Debug, Default, Serialize)]
struct ExperimentSummary {
    records: usize,
    scenarios: usize,
    seeds: usize,
}

/// Records live in `results.jsonl` under the store directory, one per line,
/// in the order they were appended. Appending an existing key is a no-op.
pub struct ResultsStore {
    dir: PathBuf,
    records: Vec<ResultRecord>,
    index: HashMap<RecordKey, usize>,
    file: File,
}

impl ResultsStore {
    /// Opens or creates a store. A trailing partial line left by an
    /// interrupted write is cut off.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| ExperimentError::io(&dir, e))?;
        let path = dir.join(RESULTS_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(ExperimentError::io(&path, e)),
        };
        let complete = text.rfind('\n').map_or(0, |i| i + 1);
        if complete < text.len() {
            let f = OpenOptions::new().write(true).open(&path).map_err(|e| ExperimentError::io(&path, e))?;
            f.set_len(complete as u64).map_err(|e| ExperimentError::io(&path, e))?;
        }
        let mut records = Vec::new();
        let mut index = HashMap::new();
        for (i, line) in text[..complete].lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ResultRecord = serde_json::from_str(line).map_err(|source| ExperimentError::Corrupt {
                path: path.clone(),
                line: i + 1,
                source,
            })?;
            index.entry(rec.key()).or_insert(records.len());
            records.push(rec);
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| ExperimentError::io(&path, e))?;
        Ok(Self { dir, records, index, file })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn results_path(&self) -> PathBuf {
        self.dir.join(RESULTS_FILE)
    }

    pub fn records(&self) -> &[ResultRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, key: &RecordKey) -> bool {
        self.index.contains_key(key)
    }

    pub fn get(&self, key: &RecordKey) -> Option<&ResultRecord> {
        self.index.get(key).map(|&i| &self.records[i])
    }

    pub fn experiment<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a ResultRecord> + 'a {
        self.records.iter().filter(move |r| r.experiment == name)
    }

    /// Writes one record; returns `false` without writing when its key is
    /// already stored.
    pub fn append(&mut self, record: ResultRecord) -> Result<bool, ExperimentError> {
        let key = record.key();
        if self.index.contains_key(&key) {
            return Ok(false);
        }
        let mut line = serde_json::to_string(&record).expect("record serializes");
        line.push('\n');
        let path = self.results_path();
        self.file.write_all(line.as_bytes()).map_err(|e| ExperimentError::io(&path, e))?;
        self.file.flush().map_err(|e| ExperimentError::io(&path, e))?;
        self.index.insert(key, self.records.len());
        self.records.push(record);
        Ok(true)
    }

    /// Rewrites `index.json` with per-experiment counts.
    pub fn write_index(&self) -> Result<PathBuf, ExperimentError> {
        let mut per: BTreeMap<&str, (usize, Vec<&str>, Vec<u64>)> = BTreeMap::new();
        for r in &self.records {
            let e = per.entry(&r.experiment).or_default();
            e.0 += 1;
            e.1.push(&r.scenario_hash);
            e.2.push(r.seed);
        }
        let experiments: BTreeMap<&str, ExperimentSummary> = per
            .into_iter()
            .map(|(name, (n, mut hashes, mut seeds))| {
                hashes.sort_unstable();
                hashes.dedup();
                seeds.sort_unstable();
                seeds.dedup();
                (name, ExperimentSummary { records: n, scenarios: hashes.len(), seeds: seeds.len() })
            })
            .collect();
        let body = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "records": self.records.len(),
            "experiments": experiments,
        });
        self.write_artifact(INDEX_FILE, &(serde_json::to_string_pretty(&body).expect("index serializes") + "\n"))
    }

    /// Writes a file next to the results, replacing any previous version.
    pub fn write_artifact(&self, name: &str, contents: &str) -> Result<PathBuf, ExperimentError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| ExperimentError::io(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| ExperimentError::io(&path, e))?;
        Ok(path)
    }
}
