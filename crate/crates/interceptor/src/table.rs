//! The correlation table.
//!
//! A submission is buffered under its flow id (PENDING_ID). When the
//! response on the same flow carries a job id, the entry is re-keyed to
//! that id (BOUND). A 200 results response for the id completes it
//! (COMPLETE) and yields a consolidated record. Entries that are rejected
//! or outlive their TTL are EVICTED. COMPLETE and EVICTED entries leave
//! the table; completed job ids are remembered as tombstones for
//! `bound_ttl` so repeat fetches are not exported twice.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use qspy_circuit::digest::sha256_hex;
use qspy_circuit::{parse_circuit, JobPayloadWire};
use qspy_wire::{
    CapturedResults, CapturedSubmission, ConsolidatedRecord, PartialReason, RecordTimestamps, ResultsBody,
    SubmissionMetadata, SubmitResponse,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntryState {
    PendingId,
    Bound,
    Complete,
    Evicted,
}

impl EntryState {
    pub fn can_advance_to(self, next: EntryState) -> bool {
        use EntryState::*;
        matches!(
            (self, next),
            (PendingId, Bound) | (PendingId, Evicted) | (Bound, Complete) | (Bound, Evicted)
        )
    }
}

impl fmt::Display for EntryState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntryState::PendingId => "PENDING_ID",
            EntryState::Bound => "BOUND",
            EntryState::Complete => "COMPLETE",
            EntryState::Evicted => "EVICTED",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvictReason {
    /// The submission was answered 401 or 403.
    AuthRejected,
    /// Any other non-200 submission response.
    UpstreamRejected,
    /// A 200 submission response without a readable job id.
    MissingJobId,
    /// The job id is already bound or recently completed.
    IdCollision,
    TtlExpired,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationEntry {
    pub flow_id: String,
    pub state: EntryState,
    pub submission: CapturedSubmission,
    pub metadata: SubmissionMetadata,
    pub job_id: Option<String>,
    pub results: Option<CapturedResults>,
    pub t_submitted: u64,
    pub t_bound: Option<u64>,
    pub t_completed: Option<u64>,
}

impl CorrelationEntry {
    /// Field-presence rule for each state.
    pub fn is_consistent(&self) -> bool {
        let ordered = self.t_bound.is_none_or(|b| b >= self.t_submitted)
            && match (self.t_bound, self.t_completed) {
                (Some(b), Some(c)) => c >= b,
                (None, Some(_)) => false,
                _ => true,
            };
        ordered
            && match self.state {
                EntryState::PendingId => self.job_id.is_none() && self.results.is_none(),
                EntryState::Bound => self.job_id.is_some() && self.results.is_none(),
                EntryState::Complete => self.job_id.is_some() && self.results.is_some(),
                EntryState::Evicted => true,
            }
    }

    fn advance(&mut self, next: EntryState, journal: &mut Option<Vec<Transition>>) {
        assert!(
            self.state.can_advance_to(next),
            "illegal transition {} -> {next} for flow {}",
            self.state,
            self.flow_id
        );
        if let Some(j) = journal {
            j.push(Transition {
                flow_id: self.flow_id.clone(),
                from: self.state,
                to: next,
            });
        }
        self.state = next;
    }

    fn into_record(self, partial_reason: Option<PartialReason>, t_evicted: Option<u64>) -> ConsolidatedRecord {
        ConsolidatedRecord {
            job_id: self.job_id,
            complete: partial_reason.is_none(),
            partial_reason,
            flow_id: Some(self.flow_id),
            circuit_payload: Some(self.submission),
            submission_metadata: Some(self.metadata),
            results_payload: self.results,
            timestamps: RecordTimestamps {
                t_submitted: Some(self.t_submitted),
                t_bound: self.t_bound,
                t_completed: self.t_completed,
                t_evicted,
                t_exported: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub flow_id: String,
    pub from: EntryState,
    pub to: EntryState,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BindOutcome {
    Bound { job_id: String },
    Evicted { reason: EvictReason, job_id: Option<String> },
    /// No buffered submission for this flow.
    NoEntry,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorrelateOutcome {
    /// Not a final answer (202 or an error status); nothing changes.
    NotReady,
    Complete(Box<ConsolidatedRecord>),
    /// Results for a job whose submission was never seen.
    Partial(Box<ConsolidatedRecord>),
    /// Results for a job already exported.
    AlreadyExported,
}

#[derive(Debug, Clone, Copy)]
pub struct TableConfig {
    pub pending_ttl_ms: u64,
    pub bound_ttl_ms: u64,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            pending_ttl_ms: 10_000,
            bound_ttl_ms: 300_000,
        }
    }
}

#[derive(Debug, Default)]
pub struct CorrelationTable {
    cfg: TableConfig,
    pending: HashMap<String, CorrelationEntry>,
    bound: HashMap<String, CorrelationEntry>,
    /// job id -> time its record was emitted.
    tombstones: HashMap<String, u64>,
    journal: Option<Vec<Transition>>,
}

pub fn capture_submission_body(body: &[u8]) -> CapturedSubmission {
    let mut cap = CapturedSubmission {
        body: String::from_utf8_lossy(body).into_owned(),
        body_sha256: sha256_hex(body),
        parse_failed: true,
        circuit_text: None,
        circuit: None,
        shots: None,
        backend_name: None,
        client_metadata: BTreeMap::new(),
    };
    if let Ok(wire) = serde_json::from_slice::<JobPayloadWire>(body) {
        let circuit = parse_circuit(&wire.circuit).ok();
        cap.parse_failed = circuit.is_none();
        cap.circuit = circuit;
        cap.circuit_text = Some(wire.circuit);
        cap.shots = Some(wire.shots);
        cap.backend_name = Some(wire.backend_name);
        cap.client_metadata = wire.metadata;
    }
    cap
}

pub fn capture_results_body(body: &[u8]) -> CapturedResults {
    CapturedResults {
        body: String::from_utf8_lossy(body).into_owned(),
        body_sha256: sha256_hex(body),
        result: serde_json::from_slice::<ResultsBody>(body).ok().and_then(|b| b.measurement()),
    }
}

impl CorrelationTable {
    pub fn new(cfg: TableConfig) -> Self {
        Self {
            cfg,
            ..Default::default()
        }
    }

    /// Records every transition; used by tests.
    pub fn with_journal(mut self) -> Self {
        self.journal = Some(Vec::new());
        self
    }

    pub fn journal(&self) -> &[Transition] {
        self.journal.as_deref().unwrap_or_default()
    }

    pub fn config(&self) -> TableConfig {
        self.cfg
    }

    /// Live entries (PENDING_ID plus BOUND).
    pub fn len(&self) -> usize {
        self.pending.len() + self.bound.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn bound_len(&self) -> usize {
        self.bound.len()
    }

    pub fn tombstones(&self) -> usize {
        self.tombstones.len()
    }

    pub fn entry_for_flow(&self, flow_id: &str) -> Option<&CorrelationEntry> {
        self.pending.get(flow_id)
    }

    pub fn entry_for_job(&self, job_id: &str) -> Option<&CorrelationEntry> {
        self.bound.get(job_id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &CorrelationEntry> {
        self.pending.values().chain(self.bound.values())
    }

    /// Buffers a submission. Never fails: an unparseable body is kept raw
    /// with `parse_failed` set. Returns false if the flow id is taken.
    pub fn capture_submission(&mut self, flow_id: &str, body: &[u8], metadata: SubmissionMetadata, now: u64) -> bool {
        if self.pending.contains_key(flow_id) {
            return false;
        }
        self.pending.insert(
            flow_id.to_string(),
            CorrelationEntry {
                flow_id: flow_id.to_string(),
                state: EntryState::PendingId,
                submission: capture_submission_body(body),
                metadata,
                job_id: None,
                results: None,
                t_submitted: now,
                t_bound: None,
                t_completed: None,
            },
        );
        true
    }

    /// Applies the submission response seen on `flow_id`.
    pub fn bind_job_id(&mut self, flow_id: &str, status: u16, body: &[u8], now: u64) -> BindOutcome {
        let Some(mut entry) = self.pending.remove(flow_id) else {
            return BindOutcome::NoEntry;
        };
        let job_id = (status == 200)
            .then(|| serde_json::from_slice::<SubmitResponse>(body).ok())
            .flatten()
            .map(|r| r.job_id)
            .filter(|id| !id.is_empty());
        let reason = match (status, &job_id) {
            (401 | 403, _) => Some(EvictReason::AuthRejected),
            (200, None) => Some(EvictReason::MissingJobId),
            (200, Some(id)) if self.bound.contains_key(id) || self.tombstones.contains_key(id) => {
                tracing::warn!(job_id = %id, flow_id, "job id collision; keeping the first binding");
                Some(EvictReason::IdCollision)
            }
            (200, Some(_)) => None,
            _ => Some(EvictReason::UpstreamRejected),
        };
        if let Some(reason) = reason {
            entry.advance(EntryState::Evicted, &mut self.journal);
            return BindOutcome::Evicted { reason, job_id };
        }
        let job_id = job_id.expect("checked above");
        entry.advance(EntryState::Bound, &mut self.journal);
        entry.job_id = Some(job_id.clone());
        entry.t_bound = Some(now.max(entry.t_submitted));
        self.bound.insert(job_id.clone(), entry);
        BindOutcome::Bound { job_id }
    }

    /// Applies a results response for `job_id`.
    pub fn correlate_result(&mut self, job_id: &str, status: u16, body: &[u8], now: u64) -> CorrelateOutcome {
        if status != 200 {
            return CorrelateOutcome::NotReady;
        }
        if self.tombstones.contains_key(job_id) {
            return CorrelateOutcome::AlreadyExported;
        }
        let results = capture_results_body(body);
        match self.bound.remove(job_id) {
            Some(mut entry) => {
                entry.advance(EntryState::Complete, &mut self.journal);
                entry.results = Some(results);
                entry.t_completed = Some(now.max(entry.t_bound.unwrap_or(0)));
                debug_assert!(entry.is_consistent());
                self.tombstones.insert(job_id.to_string(), now);
                CorrelateOutcome::Complete(Box::new(entry.into_record(None, None)))
            }
            None => {
                self.tombstones.insert(job_id.to_string(), now);
                CorrelateOutcome::Partial(Box::new(ConsolidatedRecord {
                    job_id: Some(job_id.to_string()),
                    complete: false,
                    partial_reason: Some(PartialReason::UnknownSubmission),
                    flow_id: None,
                    circuit_payload: None,
                    submission_metadata: None,
                    results_payload: Some(results),
                    timestamps: RecordTimestamps {
                        t_completed: Some(now),
                        ..Default::default()
                    },
                }))
            }
        }
    }

    /// Evicts PENDING_ID entries older than `pending_ttl_ms` and BOUND
    /// entries older than `bound_ttl_ms` (measured from binding), returning
    /// a PARTIAL record for each. Expired tombstones are dropped too.
    pub fn evict_stale(&mut self, now: u64) -> Vec<ConsolidatedRecord> {
        let TableConfig {
            pending_ttl_ms,
            bound_ttl_ms,
        } = self.cfg;
        let stale_pending: Vec<String> = self
            .pending
            .iter()
            .filter(|(_, e)| now.saturating_sub(e.t_submitted) > pending_ttl_ms)
            .map(|(k, _)| k.clone())
            .collect();
        let stale_bound: Vec<String> = self
            .bound
            .iter()
            .filter(|(_, e)| now.saturating_sub(e.t_bound.unwrap_or(e.t_submitted)) > bound_ttl_ms)
            .map(|(k, _)| k.clone())
            .collect();

        let mut out = Vec::with_capacity(stale_pending.len() + stale_bound.len());
        for key in stale_pending {
            let mut e = self.pending.remove(&key).expect("key listed above");
            e.advance(EntryState::Evicted, &mut self.journal);
            out.push(e.into_record(Some(PartialReason::TtlExpired), Some(now)));
        }
        for key in stale_bound {
            let mut e = self.bound.remove(&key).expect("key listed above");
            e.advance(EntryState::Evicted, &mut self.journal);
            out.push(e.into_record(Some(PartialReason::TtlExpired), Some(now)));
        }
        self.tombstones.retain(|_, t| now.saturating_sub(*t) <= bound_ttl_ms);
        // Sorted so a sweep's output does not depend on hash order.
        out.sort_by(|a, b| {
            (a.timestamps.t_submitted, &a.flow_id).cmp(&(b.timestamps.t_submitted, &b.flow_id))
        });
        out
    }
}
