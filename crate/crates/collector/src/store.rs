//! Append-only record store backed by a line-delimited JSON file.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use qspy_circuit::{fingerprint, Fingerprint};
use qspy_wire::ConsolidatedRecord;
use serde::{Deserialize, Serialize};

use crate::categorize::{categorize, Category, Label};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRecord {
    pub store_id: u64,
    pub record: ConsolidatedRecord,
    /// Absent when no parseable circuit was captured.
    pub fingerprint: Option<Fingerprint>,
    pub category: Category,
    pub idempotency_key: String,
    pub ingested_at: u64,
}

impl StoredRecord {
    pub fn summary(&self) -> RecordSummary {
        RecordSummary {
            store_id: self.store_id,
            job_id: self.record.job_id.clone(),
            category: self.category.label,
            qubits: self.fingerprint.as_ref().map(|f| f.num_qubits),
            depth: self.fingerprint.as_ref().map(|f| f.depth),
            complete: self.record.complete,
            ingested_at: self.ingested_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub store_id: u64,
    pub job_id: Option<String>,
    pub category: Label,
    pub qubits: Option<usize>,
    pub depth: Option<usize>,
    pub complete: bool,
    pub ingested_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ingest {
    Stored(u64),
    Duplicate(u64),
}

impl Ingest {
    pub fn store_id(self) -> u64 {
        match self {
            Ingest::Stored(id) | Ingest::Duplicate(id) => id,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store io: {0}")]
    Io(#[from] io::Error),
    #[error("{path}:{line}: {source}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
}

/// Derives fingerprint and category for a record.
pub fn analyze(record: &ConsolidatedRecord) -> (Option<Fingerprint>, Category) {
    match record.circuit() {
        Some(c) => {
            let fp = fingerprint(c);
            let cat = categorize(c, &fp);
            (Some(fp), cat)
        }
        None => (
            None,
            Category {
                label: Label::Unknown,
                evidence: "no parseable circuit captured".into(),
            },
        ),
    }
}

pub struct Store {
    path: Option<PathBuf>,
    file: Option<File>,
    records: Vec<StoredRecord>,
    by_key: HashMap<String, u64>,
}

impl Store {
    /// A store that lives only in memory.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            file: None,
            records: Vec::new(),
            by_key: HashMap::new(),
        }
    }

    /// Opens `path`, replaying every record already in it. A torn final
    /// line (a crash mid-append, never acknowledged) is dropped and
    /// truncated away; corruption anywhere else is an error.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut store = Self::in_memory();
        let mut good_len = 0u64;
        if path.exists() {
            let lines: Vec<String> = BufReader::new(File::open(path)?).lines().collect::<Result<_, _>>()?;
            let last = lines.len();
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    good_len += line.len() as u64 + 1;
                    continue;
                }
                match serde_json::from_str::<StoredRecord>(line) {
                    Ok(rec) => {
                        store.index(rec);
                        good_len += line.len() as u64 + 1;
                    }
                    Err(e) if i + 1 == last => {
                        tracing::warn!(line = i + 1, error = %e, "dropping torn trailing record");
                    }
                    Err(source) => {
                        return Err(StoreError::Corrupt {
                            path: path.to_path_buf(),
                            line: i + 1,
                            source,
                        })
                    }
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        if file.metadata()?.len() > good_len {
            file.set_len(good_len)?;
        }
        store.path = Some(path.to_path_buf());
        store.file = Some(file);
        Ok(store)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn index(&mut self, rec: StoredRecord) {
        self.by_key.insert(rec.idempotency_key.clone(), rec.store_id);
        self.records.push(rec);
    }

    /// Stores `record` under `key` unless the key is already present. The
    /// line is flushed to disk before this returns.
    pub fn ingest(&mut self, record: ConsolidatedRecord, key: &str, now: u64) -> Result<Ingest, StoreError> {
        if let Some(&id) = self.by_key.get(key) {
            return Ok(Ingest::Duplicate(id));
        }
        let (fingerprint, category) = analyze(&record);
        let rec = StoredRecord {
            store_id: self.records.last().map_or(1, |r| r.store_id + 1),
            record,
            fingerprint,
            category,
            idempotency_key: key.to_string(),
            ingested_at: now,
        };
        if let Some(file) = &mut self.file {
            let mut line = serde_json::to_vec(&rec).expect("stored records serialize");
            line.push(b'\n');
            file.write_all(&line)?;
            file.sync_data()?;
        }
        let id = rec.store_id;
        self.index(rec);
        Ok(Ingest::Stored(id))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[StoredRecord] {
        &self.records
    }

    pub fn get(&self, store_id: u64) -> Option<&StoredRecord> {
        self.records
            .binary_search_by_key(&store_id, |r| r.store_id)
            .ok()
            .map(|i| &self.records[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use qspy_wire::{PartialReason, RecordTimestamps};

    fn partial(job: &str) -> ConsolidatedRecord {
        ConsolidatedRecord {
            job_id: Some(job.into()),
            complete: false,
            partial_reason: Some(PartialReason::UnknownSubmission),
            flow_id: None,
            circuit_payload: None,
            submission_metadata: None,
            results_payload: None,
            timestamps: RecordTimestamps::default(),
        }
    }

    #[test]
    fn ids_increase_and_keys_dedupe() {
        let mut s = Store::in_memory();
        assert_eq!(s.ingest(partial("a"), "k1", 5).unwrap(), Ingest::Stored(1));
        assert_eq!(s.ingest(partial("b"), "k2", 6).unwrap(), Ingest::Stored(2));
        assert_eq!(s.ingest(partial("c"), "k1", 7).unwrap(), Ingest::Duplicate(1));
        assert_eq!(s.len(), 2);
        assert_eq!(s.get(2).unwrap().record.job_id.as_deref(), Some("b"));
        assert_eq!(s.get(1).unwrap().category.label, Label::Unknown);
    }

    #[test]
    fn torn_tail_is_discarded() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        {
            let mut s = Store::open(&path).unwrap();
            s.ingest(partial("a"), "k1", 1).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"store_id\":2,\"rec").unwrap();
        drop(f);
        let mut s = Store::open(&path).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.ingest(partial("b"), "k2", 2).unwrap(), Ingest::Stored(2));
        drop(s);
        assert_eq!(Store::open(&path).unwrap().len(), 2);
    }

    #[test]
    fn mid_file_corruption_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        {
            let mut s = Store::open(&path).unwrap();
            s.ingest(partial("a"), "k1", 1).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, format!("garbage\n{text}")).unwrap();
        assert!(matches!(Store::open(&path), Err(StoreError::Corrupt { line: 1, .. })));
    }
}
