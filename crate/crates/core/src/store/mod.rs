//! Append-only persistence for call records and cached explanations.
//!
//! Two newline-delimited JSON logs live in the data directory:
//! `records.log` holds one record per line in the wire form, and
//! `explanations.log` holds cache puts and deletes. The in-memory index is
//! rebuilt by replaying both logs on open.

pub mod ntriples;

use std::collections::{BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Explanation, MethodCallRecord, Timestamp, ValidationError};

pub const RECORDS_FILE: &str = "records.log";
pub const EXPLANATIONS_FILE: &str = "explanations.log";
pub const DATA_DIR_ENV: &str = "PROCSIGHT_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "./data";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage failure: {0}")]
    Storage(#[from] io::Error),
    #[error("{file} line {line} is corrupt: {reason}")]
    Corrupt { file: PathBuf, line: usize, reason: String },
    #[error("unknown process `{0}`")]
    UnknownProcess(String),
}

/// Why a single record of a batch was not stored.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordRejection {
    #[error("validation failed: {0}")]
    Invalid(#[from] ValidationError),
    #[error("duplicate call_id `{0}`")]
    Duplicate(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedRecord {
    pub index: usize,
    pub reason: RecordRejection,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AppendReport {
    pub accepted: usize,
    pub rejected: Vec<RejectedRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessSummary {
    pub process_id: String,
    pub first_started_at: Timestamp,
    pub last_ended_at: Timestamp,
    pub record_count: usize,
    pub components: Vec<String>,
    pub root_count: usize,
}

#[derive(Debug, Default)]
struct ProcessEntry {
    call_ids: Vec<String>,
    first_started_at: Option<Timestamp>,
    last_ended_at: Option<Timestamp>,
    components: BTreeSet<String>,
}

#[derive(Debug, Default)]
struct Index {
    records: HashMap<String, Arc<MethodCallRecord>>,
    processes: HashMap<String, ProcessEntry>,
    explanations: HashMap<String, HashMap<String, Explanation>>,
}

impl Index {
    fn insert_record(&mut self, record: MethodCallRecord) {
        let entry = self.processes.entry(record.process_id.clone()).or_default();
        entry.call_ids.push(record.call_id.clone());
        entry.first_started_at = Some(match entry.first_started_at {
            Some(t) => t.min(record.started_at),
            None => record.started_at,
        });
        entry.last_ended_at = Some(match entry.last_ended_at {
            Some(t) => t.max(record.ended_at),
            None => record.ended_at,
        });
        if !entry.components.contains(&record.component) {
            entry.components.insert(record.component.clone());
        }
        self.records.insert(record.call_id.clone(), Arc::new(record));
    }

    fn summarize(&self, process_id: &str, entry: &ProcessEntry) -> ProcessSummary {
        let root_count = entry
            .call_ids
            .iter()
            .filter(|id| {
                let r = &self.records[*id];
                match &r.caller_id {
                    None => true,
                    Some(c) => self.records.get(c).is_none_or(|p| p.process_id != r.process_id),
                }
            })
            .count();
        ProcessSummary {
            process_id: process_id.to_owned(),
            first_started_at: entry.first_started_at.expect("non-empty process"),
            last_ended_at: entry.last_ended_at.expect("non-empty process"),
            record_count: entry.call_ids.len(),
            components: entry.components.iter().cloned().collect(),
            root_count,
        }
    }

    fn apply(&mut self, op: CacheOp) {
        match op {
            CacheOp::Put(e) => {
                let e = Explanation::from(e);
                self.explanations
                    .entry(e.call_id.clone())
                    .or_default()
                    .insert(e.config_hash.clone(), e);
            }
            CacheOp::Delete { call_id, config_hash } => {
                if let Some(per_call) = self.explanations.get_mut(&call_id) {
                    per_call.remove(&config_hash);
                    if per_call.is_empty() {
                        self.explanations.remove(&call_id);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StoredExplanation {
    call_id: String,
    config_hash: String,
    text: String,
    #[serde(default)]
    prompt: Option<String>,
    #[serde(default)]
    child_call_ids: Vec<String>,
    generated_at: Timestamp,
}

impl From<&Explanation> for StoredExplanation {
    fn from(e: &Explanation) -> Self {
        Self {
            call_id: e.call_id.clone(),
            config_hash: e.config_hash.clone(),
            text: e.text.clone(),
            prompt: e.prompt.clone(),
            child_call_ids: e.child_call_ids.clone(),
            generated_at: e.generated_at,
        }
    }
}

impl From<StoredExplanation> for Explanation {
    fn from(e: StoredExplanation) -> Self {
        Self {
            call_id: e.call_id,
            config_hash: e.config_hash,
            text: e.text,
            prompt: e.prompt,
            child_call_ids: e.child_call_ids,
            generated_at: e.generated_at,
            from_cache: false,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum CacheOp {
    Put(StoredExplanation),
    Delete { call_id: String, config_hash: String },
}

/// Durable, append-only store. Writers are serialized; readers see the
/// state as of the last completed append.
#[derive(Debug)]
pub struct TraceStore {
    dir: PathBuf,
    index: RwLock<Index>,
    records_log: Mutex<File>,
    explanations_log: Mutex<File>,
}

impl TraceStore {
    /// Opens (or creates) the store in `dir`, replaying both logs.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;

        let mut index = Index::default();
        let records_path = dir.join(RECORDS_FILE);
        let records_log = replay(&records_path, |line| {
            let record = MethodCallRecord::from_wire_line(line).map_err(|e| e.to_string())?;
            // Only validated, unique records are ever written.
            if index.records.contains_key(&record.call_id) {
                return Err(format!("duplicate call_id `{}`", record.call_id));
            }
            index.insert_record(record);
            Ok(())
        })?;
        let explanations_path = dir.join(EXPLANATIONS_FILE);
        let explanations_log = replay(&explanations_path, |line| {
            let op: CacheOp = serde_json::from_str(line).map_err(|e| e.to_string())?;
            index.apply(op);
            Ok(())
        })?;

        Ok(Self {
            dir,
            index: RwLock::new(index),
            records_log: Mutex::new(records_log),
            explanations_log: Mutex::new(explanations_log),
        })
    }

    /// Opens the store at `$PROCSIGHT_DATA_DIR`, or `./data`.
    pub fn open_from_env() -> Result<Self, StoreError> {
        let dir = std::env::var(DATA_DIR_ENV).unwrap_or_else(|_| DEFAULT_DATA_DIR.to_owned());
        Self::open(dir)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Validates and appends a batch. Bad or duplicate records are reported
    /// individually; the rest are written and synced before returning.
    pub fn append_records(
        &self,
        batch: Vec<MethodCallRecord>,
    ) -> Result<AppendReport, StoreError> {
        let mut log = self.records_log.lock();
        let mut report = AppendReport::default();
        let mut accepted = Vec::with_capacity(batch.len());
        {
            let index = self.index.read();
            let mut seen = std::collections::HashSet::new();
            for (i, record) in batch.into_iter().enumerate() {
                let verdict = record.validate().map_err(RecordRejection::from).and_then(|()| {
                    if index.records.contains_key(&record.call_id) || !seen.insert(record.call_id.clone()) {
                        Err(RecordRejection::Duplicate(record.call_id.clone()))
                    } else {
                        Ok(())
                    }
                });
                match verdict {
                    Ok(()) => accepted.push(record),
                    Err(reason) => report.rejected.push(RejectedRecord { index: i, reason }),
                }
            }
        }
        if accepted.is_empty() {
            return Ok(report);
        }

        let mut buf = String::new();
        for r in &accepted {
            buf.push_str(&r.to_wire_line());
            buf.push('\n');
        }
        log.write_all(buf.as_bytes())?;
        log.sync_data()?;

        report.accepted = accepted.len();
        let mut index = self.index.write();
        for r in accepted {
            index.insert_record(r);
        }
        Ok(report)
    }

    /// Most recently finished processes first.
    pub fn list_processes(&self, limit: usize) -> Vec<ProcessSummary> {
        let index = self.index.read();
        let mut entries: Vec<_> = index.processes.iter().collect();
        entries.sort_by(|(ida, a), (idb, b)| {
            b.last_ended_at.cmp(&a.last_ended_at).then_with(|| ida.cmp(idb))
        });
        entries
            .into_iter()
            .take(limit)
            .map(|(id, e)| index.summarize(id, e))
            .collect()
    }

    pub fn process_summary(&self, process_id: &str) -> Result<ProcessSummary, StoreError> {
        let index = self.index.read();
        let entry = index
            .processes
            .get(process_id)
            .ok_or_else(|| StoreError::UnknownProcess(process_id.to_owned()))?;
        Ok(index.summarize(process_id, entry))
    }

    /// All records of a process in insertion order.
    pub fn records_for_process(
        &self,
        process_id: &str,
    ) -> Result<Vec<MethodCallRecord>, StoreError> {
        let index = self.index.read();
        let entry = index
            .processes
            .get(process_id)
            .ok_or_else(|| StoreError::UnknownProcess(process_id.to_owned()))?;
        Ok(entry
            .call_ids
            .iter()
            .map(|id| MethodCallRecord::clone(&index.records[id]))
            .collect())
    }

    pub fn get_record(&self, call_id: &str) -> Option<MethodCallRecord> {
        self.index
            .read()
            .records
            .get(call_id)
            .map(|r| MethodCallRecord::clone(r))
    }

    pub fn record_count(&self) -> usize {
        self.index.read().records.len()
    }

    pub fn get_cached_explanation(&self, call_id: &str, config_hash: &str) -> Option<Explanation> {
        self.index
            .read()
            .explanations
            .get(call_id)
            .and_then(|m| m.get(config_hash))
            .map(|e| Explanation { from_cache: true, ..e.clone() })
    }

    /// Last writer wins per `(call_id, config_hash)`.
    pub fn put_cached_explanation(&self, explanation: &Explanation) -> Result<(), StoreError> {
        let mut log = self.explanations_log.lock();
        write_ops(&mut log, &[CacheOp::Put(StoredExplanation::from(explanation))])?;
        let mut stored = explanation.clone();
        stored.from_cache = false;
        self.index
            .write()
            .explanations
            .entry(stored.call_id.clone())
            .or_default()
            .insert(stored.config_hash.clone(), stored);
        drop(log);
        Ok(())
    }

    /// Drops every cached explanation of `call_id`; returns how many.
    pub fn remove_cached_explanations(&self, call_id: &str) -> Result<usize, StoreError> {
        let mut log = self.explanations_log.lock();
        let hashes: Vec<String> = match self.index.read().explanations.get(call_id) {
            Some(m) => m.keys().cloned().collect(),
            None => return Ok(0),
        };
        let ops: Vec<_> = hashes
            .iter()
            .map(|h| CacheOp::Delete { call_id: call_id.to_owned(), config_hash: h.clone() })
            .collect();
        write_ops(&mut log, &ops)?;
        let mut index = self.index.write();
        for op in ops {
            index.apply(op);
        }
        Ok(hashes.len())
    }

    pub fn cached_explanation_count(&self) -> usize {
        self.index.read().explanations.values().map(HashMap::len).sum()
    }

    /// Deterministic N-Triples rendering of all records of the process.
    pub fn export_ntriples(&self, process_id: &str) -> Result<String, StoreError> {
        let index = self.index.read();
        let entry = index
            .processes
            .get(process_id)
            .ok_or_else(|| StoreError::UnknownProcess(process_id.to_owned()))?;
        Ok(ntriples::render(entry.call_ids.iter().map(|id| &*index.records[id])))
    }
}

// Cache lines are flushed to the OS but not fsynced: they can always be
// regenerated from the records.
fn write_ops(log: &mut File, ops: &[CacheOp]) -> Result<(), StoreError> {
    let mut buf = String::new();
    for op in ops {
        buf.push_str(&serde_json::to_string(op).expect("cache ops serialize"));
        buf.push('\n');
    }
    log.write_all(buf.as_bytes())?;
    log.flush()?;
    Ok(())
}

/// Feeds every complete line of `path` to `apply` and returns the file
/// opened for appending. A torn final line (no trailing newline) left by a
/// crash mid-write is cut off; any other bad line is an error.
fn replay(
    path: &Path,
    mut apply: impl FnMut(&str) -> Result<(), String>,
) -> Result<File, StoreError> {
    let mut file = OpenOptions::new()
        .read(true)
        .append(true)
        .create(true)
        .open(path)?;
    let mut reader = BufReader::new(&mut file);
    let mut line = String::new();
    let mut good_len = 0u64;
    let mut line_no = 0;
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        if !line.ends_with('\n') {
            tracing::warn!(path = %path.display(), line = line_no, "dropping torn trailing line");
            break;
        }
        let content = line.trim_end_matches(['\n', '\r']);
        if !content.is_empty() {
            apply(content).map_err(|reason| StoreError::Corrupt {
                file: path.to_path_buf(),
                line: line_no,
                reason,
            })?;
        }
        good_len += n as u64;
    }
    drop(reader);
    if file.metadata()?.len() != good_len {
        file.set_len(good_len)?;
        file.seek(SeekFrom::End(0))?;
    }
    Ok(file)
}
