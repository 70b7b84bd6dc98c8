//! The consolidated record: one job's circuit, submission context, results
//! and observation times, linked by the backend-issued job id.

use std::collections::BTreeMap;

use qspy_circuit::digest::sha256_hex;
use qspy_circuit::{Circuit, MeasurementResult};
use serde::{Deserialize, Serialize};

/// Why a record is missing parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartialReason {
    /// The buffered submission was never completed within its TTL.
    TtlExpired,
    /// Results were observed for a job whose submission was never seen.
    UnknownSubmission,
}

/// Request body of a captured submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapturedSubmission {
    /// The body as text (lossy for non-UTF-8 bytes).
    pub body: String,
    /// SHA-256 of the exact body bytes.
    pub body_sha256: String,
    pub parse_failed: bool,
    /// The `circuit` field exactly as submitted.
    pub circuit_text: Option<String>,
    pub circuit: Option<Circuit>,
    pub shots: Option<u64>,
    pub backend_name: Option<String>,
    #[serde(default)]
    pub client_metadata: BTreeMap<String, String>,
}

impl CapturedSubmission {
    pub fn circuit_sha256(&self) -> Option<String> {
        self.circuit_text.as_deref().map(sha256_hex)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionMetadata {
    pub host: String,
    pub path: String,
    /// `sub` claim read from the bearer token without verifying it.
    pub auth_subject: Option<String>,
    pub headers: BTreeMap<String, String>,
    pub client_addr: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapturedResults {
    pub body: String,
    pub body_sha256: String,
    pub result: Option<MeasurementResult>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordTimestamps {
    pub t_submitted: Option<u64>,
    pub t_bound: Option<u64>,
    pub t_completed: Option<u64>,
    pub t_evicted: Option<u64>,
    pub t_exported: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsolidatedRecord {
    pub job_id: Option<String>,
    /// True when circuit, metadata and results were all captured.
    pub complete: bool,
    pub partial_reason: Option<PartialReason>,
    pub flow_id: Option<String>,
    pub circuit_payload: Option<CapturedSubmission>,
    pub submission_metadata: Option<SubmissionMetadata>,
    pub results_payload: Option<CapturedResults>,
    pub timestamps: RecordTimestamps,
}

impl ConsolidatedRecord {
    /// Deduplication key: digest of `job_id ‖ t_completed` when both are
    /// known, otherwise of the flow id and eviction time.
    pub fn idempotency_key(&self) -> String {
        match (&self.job_id, self.timestamps.t_completed) {
            (Some(id), Some(t)) => sha256_hex(format!("{id}|{t}")),
            _ => sha256_hex(format!(
                "partial|{}|{}|{}",
                self.job_id.as_deref().unwrap_or(""),
                self.flow_id.as_deref().unwrap_or(""),
                self.timestamps.t_evicted.unwrap_or(0)
            )),
        }
    }

    pub fn circuit(&self) -> Option<&Circuit> {
        self.circuit_payload.as_ref().and_then(|c| c.circuit.as_ref())
    }

    pub fn result(&self) -> Option<&MeasurementResult> {
        self.results_payload.as_ref().and_then(|r| r.result.as_ref())
    }

    /// Checks the field-presence rule: complete records carry everything,
    /// partial ones carry a reason.
    pub fn is_well_formed(&self) -> bool {
        if self.complete {
            self.job_id.is_some()
                && self.partial_reason.is_none()
                && self.circuit_payload.is_some()
                && self.submission_metadata.is_some()
                && self.results_payload.is_some()
                && self.timestamps.t_submitted.is_some()
                && self.timestamps.t_bound.is_some()
                && self.timestamps.t_completed.is_some()
        } else {
            self.partial_reason.is_some()
        }
    }
}
