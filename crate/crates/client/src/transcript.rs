//! Client-visible record of every exchange.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use qspy_circuit::digest::sha256_hex;
use qspy_wire::ResultsBody;
use serde::{Deserialize, Serialize};

/// Placeholder substituted for job ids when bodies are normalized.
pub const JOB_ID_SLOT: &str = "{job_id}";

/// Structure of a results response, comparable across runs whose counts
/// differ only by sampling seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResultShape {
    Counts {
        shots: u64,
        total: u64,
        width: Option<usize>,
        /// Every key has the same length and only `0`/`1` characters.
        keys_valid: bool,
    },
    Failed,
    Pending,
    Unparseable,
}

impl ResultShape {
    pub fn of(body: &[u8]) -> Self {
        match serde_json::from_slice::<ResultsBody>(body) {
            Ok(b @ ResultsBody::Ready { .. }) => {
                let r = b.measurement().expect("ready body has a measurement");
                ResultShape::Counts {
                    shots: r.shots,
                    total: r.total(),
                    width: r.width(),
                    keys_valid: r.is_consistent(),
                }
            }
            Ok(ResultsBody::Failed { .. }) => ResultShape::Failed,
            Ok(ResultsBody::Pending { .. }) => ResultShape::Pending,
            Err(_) => ResultShape::Unparseable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub sequence_no: u64,
    /// Position of the job in the workload.
    pub job_index: usize,
    pub job_id: Option<String>,
    pub method: String,
    pub path: String,
    pub request_body_hash: String,
    pub response_status: Option<u16>,
    pub response_body_hash: Option<String>,
    /// Hash of the response body with this job's id replaced by
    /// [`JOB_ID_SLOT`].
    pub normalized_body_hash: Option<String>,
    pub result_shape: Option<ResultShape>,
    pub tls_peer_chain_fingerprints: Vec<String>,
    pub latency_ms: f64,
    /// `kind: message` when the exchange failed below HTTP.
    pub error: Option<String>,
}

impl TranscriptEntry {
    pub fn is_tls_error(&self) -> bool {
        self.error.as_deref().is_some_and(|e| e.starts_with("tls:"))
    }
}

pub fn normalized_hash(body: &[u8], job_id: Option<&str>) -> String {
    match (job_id, std::str::from_utf8(body)) {
        (Some(id), Ok(text)) if !id.is_empty() => sha256_hex(text.replace(id, JOB_ID_SLOT)),
        _ => sha256_hex(body),
    }
}

/// Replaces `job_id` in a request path with [`JOB_ID_SLOT`].
pub fn normalize_path(path: &str, job_id: Option<&str>) -> String {
    match job_id {
        Some(id) if !id.is_empty() => path
            .split('/')
            .map(|seg| if seg == id { JOB_ID_SLOT } else { seg })
            .collect::<Vec<_>>()
            .join("/"),
        _ => path.to_string(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClientTranscript {
    pub scenario_label: String,
    pub started_at: u64,
    pub entries: Vec<TranscriptEntry>,
}

impl ClientTranscript {
    /// Entries for one job in sequence order.
    pub fn job(&self, job_index: usize) -> Vec<&TranscriptEntry> {
        self.entries.iter().filter(|e| e.job_index == job_index).collect()
    }

    pub fn job_indices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.entries.iter().map(|e| e.job_index).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// One entry per line.
    pub fn write_jsonl(&self, path: &Path) -> std::io::Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn read_jsonl(path: &Path, scenario_label: &str) -> std::io::Result<Self> {
        let mut entries = Vec::new();
        for line in BufReader::new(std::fs::File::open(path)?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line)?);
        }
        Ok(Self {
            scenario_label: scenario_label.to_string(),
            started_at: 0,
            entries,
        })
    }
}

/// Shared append point; sequence numbers are assigned under the lock so
/// they follow append order.
#[derive(Debug, Default)]
pub struct Recorder {
    entries: Mutex<Vec<TranscriptEntry>>,
}

impl Recorder {
    pub fn append(&self, mut entry: TranscriptEntry) {
        let mut entries = self.entries.lock().expect("recorder lock");
        entry.sequence_no = entries.len() as u64 + 1;
        entries.push(entry);
    }

    pub fn into_entries(self) -> Vec<TranscriptEntry> {
        self.entries.into_inner().expect("recorder lock")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        let ready = br#"{"job_id":"J","counts":{"00":3,"11":7},"shots":10,"seed":1}"#;
        assert_eq!(
            ResultShape::of(ready),
            ResultShape::Counts {
                shots: 10,
                total: 10,
                width: Some(2),
                keys_valid: true
            }
        );
        assert_eq!(ResultShape::of(br#"{"job_id":"J","state":"QUEUED"}"#), ResultShape::Pending);
        assert_eq!(ResultShape::of(b"nope"), ResultShape::Unparseable);
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_path("/api/v1/jobs/ABC/results", Some("ABC")), "/api/v1/jobs/{job_id}/results");
        assert_eq!(
            normalized_hash(br#"{"job_id":"ABC"}"#, Some("ABC")),
            normalized_hash(br#"{"job_id":"XYZ"}"#, Some("XYZ"))
        );
        assert_ne!(normalized_hash(b"{}", None), normalized_hash(b"{ }", None));
    }

    #[test]
    fn recorder_numbers_in_append_order() {
        let r = Recorder::default();
        for i in 0..3 {
            r.append(TranscriptEntry {
                sequence_no: 0,
                job_index: i,
                job_id: None,
                method: "GET".into(),
                path: "/".into(),
                request_body_hash: String::new(),
                response_status: None,
                response_body_hash: None,
                normalized_body_hash: None,
                result_shape: None,
                tls_peer_chain_fingerprints: vec![],
                latency_ms: 0.0,
                error: None,
            });
        }
        let seq: Vec<u64> = r.into_entries().iter().map(|e| e.sequence_no).collect();
        assert_eq!(seq, vec![1, 2, 3]);
    }
}
