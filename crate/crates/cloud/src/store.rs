//! The job table. All mutation happens under one lock so every state
//! transition is atomic with respect to readers.

use std::collections::HashMap;
use std::sync::Mutex;

use bytes::Bytes;
use qspy_circuit::digest::{sha256_hex, sha256_u64};
use qspy_circuit::rng::SplitMix64;
use qspy_circuit::{JobPayload, MeasurementResult, SimulateError};
use qspy_wire::{JobState, JobStatusBody, ResultsBody};
use rand::Rng;
use serde::{Deserialize, Serialize};

const JOB_ID_LEN: usize = 26;
const JOB_ID_ALPHABET: &[u8; 32] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ234567";

/// 26 random base32 characters (130 bits).
pub fn new_job_id() -> String {
    let mut rng = rand::thread_rng();
    (0..JOB_ID_LEN)
        .map(|_| JOB_ID_ALPHABET[rng.gen_range(0..32)] as char)
        .collect()
}

/// Sampling seed for a job: stable across restarts for the same id.
pub fn seed_for(job_id: &str) -> u64 {
    sha256_u64(job_id)
}

#[derive(Debug, Clone)]
pub struct JobRecord {
    pub job_id: String,
    pub state: JobState,
    pub payload: JobPayload,
    /// The `circuit` field exactly as submitted.
    pub circuit_text: String,
    pub submission_sha256: String,
    pub subject: String,
    pub result: Option<MeasurementResult>,
    pub error: Option<String>,
    /// Serialized 200 body for `/results`, fixed once the job finishes.
    pub results_body: Option<Bytes>,
    pub created_at: u64,
    pub started_at: Option<u64>,
    pub completed_at: Option<u64>,
    pub run_after: u64,
    pub results_served: u32,
}

/// Snapshot of a job as recorded by the service itself; this is the
/// ground truth the harness checks intercepted records against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobLogEntry {
    pub job_id: String,
    pub state: JobState,
    pub circuit_text: String,
    pub circuit_sha256: String,
    pub submission_sha256: String,
    pub shots: u64,
    pub backend_name: String,
    pub subject: String,
    pub result: Option<MeasurementResult>,
    pub error: Option<String>,
    pub results_body_sha256: Option<String>,
    pub created_at: u64,
    pub started_at: Option<u64>,
    pub completed_at: Option<u64>,
    /// How many times a terminal `/results` body was returned.
    pub results_served: u32,
}

/// Outcome of a `/results` lookup.
#[derive(Debug, Clone, PartialEq)]
pub enum ResultsLookup {
    Pending(Bytes),
    Done(Bytes),
}

pub struct NewJob {
    pub payload: JobPayload,
    pub circuit_text: String,
    pub submission_sha256: String,
    pub subject: String,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct QueuePolicy {
    pub delay_ms: u64,
    pub jitter_ms: u64,
    pub jitter_seed: u64,
}

struct Inner {
    jobs: HashMap<String, JobRecord>,
    order: Vec<String>,
    jitter: SplitMix64,
}

pub struct JobStore {
    inner: Mutex<Inner>,
    policy: QueuePolicy,
}

impl JobStore {
    pub fn new(policy: QueuePolicy) -> Self {
        Self {
            inner: Mutex::new(Inner {
                jobs: HashMap::new(),
                order: Vec::new(),
                jitter: SplitMix64::new(policy.jitter_seed),
            }),
            policy,
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Creates a QUEUED job and returns its fresh id.
    pub fn submit(&self, job: NewJob, now: u64) -> String {
        let mut inner = self.lock();
        let job_id = loop {
            let id = new_job_id();
            if !inner.jobs.contains_key(&id) {
                break id;
            }
        };
        let jitter = if self.policy.jitter_ms > 0 {
            inner.jitter.below(self.policy.jitter_ms + 1)
        } else {
            0
        };
        let record = JobRecord {
            job_id: job_id.clone(),
            state: JobState::Queued,
            payload: job.payload,
            circuit_text: job.circuit_text,
            submission_sha256: job.submission_sha256,
            subject: job.subject,
            result: None,
            error: None,
            results_body: None,
            created_at: now,
            started_at: None,
            completed_at: None,
            run_after: now + self.policy.delay_ms + jitter,
            results_served: 0,
        };
        inner.order.push(job_id.clone());
        inner.jobs.insert(job_id.clone(), record);
        job_id
    }

    pub fn status(&self, job_id: &str) -> Option<JobStatusBody> {
        self.lock().jobs.get(job_id).map(|j| JobStatusBody {
            job_id: j.job_id.clone(),
            state: j.state,
            created_at: j.created_at,
            started_at: j.started_at,
            completed_at: j.completed_at,
        })
    }

    pub fn results(&self, job_id: &str) -> Option<ResultsLookup> {
        let mut inner = self.lock();
        let job = inner.jobs.get_mut(job_id)?;
        Some(match &job.results_body {
            Some(body) => {
                job.results_served += 1;
                ResultsLookup::Done(body.clone())
            }
            None => ResultsLookup::Pending(json_bytes(&ResultsBody::Pending {
                job_id: job.job_id.clone(),
                state: job.state,
            })),
        })
    }

    /// Moves every due QUEUED job to RUNNING and hands back the work.
    pub fn start_due(&self, now: u64) -> Vec<(String, JobPayload)> {
        let mut inner = self.lock();
        let Inner { jobs, order, .. } = &mut *inner;
        let mut started = Vec::new();
        for id in order.iter() {
            let job = jobs.get_mut(id).expect("order and jobs agree");
            if job.state == JobState::Queued && job.run_after <= now {
                advance(job, JobState::Running);
                job.started_at = Some(now.max(job.created_at));
                started.push((id.clone(), job.payload.clone()));
            }
        }
        started
    }

    /// Records the outcome of a RUNNING job.
    pub fn finish(&self, job_id: &str, outcome: Result<MeasurementResult, SimulateError>, now: u64) {
        let mut inner = self.lock();
        let Some(job) = inner.jobs.get_mut(job_id) else { return };
        if job.state != JobState::Running {
            return;
        }
        job.completed_at = Some(now.max(job.started_at.unwrap_or(job.created_at)));
        match outcome {
            Ok(result) => {
                advance(job, JobState::Completed);
                job.results_body = Some(json_bytes(&ResultsBody::ready(job_id, &result)));
                job.result = Some(result);
            }
            Err(e) => {
                advance(job, JobState::Failed);
                let error = e.to_string();
                job.results_body = Some(json_bytes(&ResultsBody::Failed {
                    job_id: job_id.to_string(),
                    state: JobState::Failed,
                    error: error.clone(),
                }));
                job.error = Some(error);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.lock().jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of jobs not yet COMPLETED or FAILED.
    pub fn pending(&self) -> usize {
        self.lock().jobs.values().filter(|j| !j.state.is_terminal()).count()
    }

    pub fn log(&self) -> Vec<JobLogEntry> {
        let inner = self.lock();
        inner
            .order
            .iter()
            .map(|id| {
                let j = &inner.jobs[id];
                JobLogEntry {
                    job_id: j.job_id.clone(),
                    state: j.state,
                    circuit_sha256: sha256_hex(&j.circuit_text),
                    circuit_text: j.circuit_text.clone(),
                    submission_sha256: j.submission_sha256.clone(),
                    shots: j.payload.shots,
                    backend_name: j.payload.backend_name.clone(),
                    subject: j.subject.clone(),
                    result: j.result.clone(),
                    error: j.error.clone(),
                    results_body_sha256: j.results_body.as_ref().map(sha256_hex),
                    created_at: j.created_at,
                    started_at: j.started_at,
                    completed_at: j.completed_at,
                    results_served: j.results_served,
                }
            })
            .collect()
    }
}

fn advance(job: &mut JobRecord, next: JobState) {
    assert!(
        job.state.can_advance_to(next),
        "illegal job transition {} -> {next}",
        job.state
    );
    job.state = next;
}

pub(crate) fn json_bytes<T: Serialize>(v: &T) -> Bytes {
    Bytes::from(serde_json::to_vec(v).expect("serializable"))
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use qspy_circuit::{parse_circuit, simulate};

    use super::*;

    fn job(text: &str, shots: u64) -> NewJob {
        NewJob {
            payload: JobPayload::new(parse_circuit(text).unwrap(), shots, "sim"),
            circuit_text: text.into(),
            submission_sha256: sha256_hex(text),
            subject: "alice".into(),
        }
    }

    fn run_all(store: &JobStore, now: u64) {
        for (id, p) in store.start_due(now) {
            store.finish(&id, simulate(&p.circuit, p.shots, seed_for(&id)), now);
        }
    }

    #[test]
    fn job_ids_are_26_base32_chars() {
        let id = new_job_id();
        assert_eq!(id.len(), 26);
        assert!(id.bytes().all(|b| JOB_ID_ALPHABET.contains(&b)));
    }

    #[test]
    fn ten_thousand_ids_do_not_collide() {
        let store = JobStore::new(QueuePolicy::default());
        let ids: HashSet<String> = (0..10_000).map(|_| store.submit(job("qubits 1\nmeasure 0", 1), 0)).collect();
        assert_eq!(ids.len(), 10_000);
        assert_eq!(store.len(), 10_000);
    }

    #[test]
    fn lifecycle_and_results() {
        let store = JobStore::new(QueuePolicy {
            delay_ms: 50,
            ..Default::default()
        });
        let id = store.submit(job("qubits 1\nx 0\nmeasure 0", 100), 1000);
        assert_eq!(store.status(&id).unwrap().state, JobState::Queued);
        assert!(matches!(store.results(&id), Some(ResultsLookup::Pending(_))));

        run_all(&store, 1049);
        assert_eq!(store.status(&id).unwrap().state, JobState::Queued);

        run_all(&store, 1050);
        let st = store.status(&id).unwrap();
        assert_eq!(st.state, JobState::Completed);
        assert_eq!((st.created_at, st.started_at, st.completed_at), (1000, Some(1050), Some(1050)));

        let Some(ResultsLookup::Done(body)) = store.results(&id) else { panic!() };
        let parsed: ResultsBody = serde_json::from_slice(&body).unwrap();
        let r = parsed.measurement().unwrap();
        assert_eq!(r.counts.get("1"), Some(&100));
        assert_eq!(r.seed, seed_for(&id));
        assert_eq!(store.log()[0].results_served, 1);
        assert_eq!(store.log()[0].results_body_sha256, Some(sha256_hex(&body)));
        assert!(store.results("nope").is_none());
    }

    #[test]
    fn oversized_circuit_fails_cleanly() {
        let store = JobStore::new(QueuePolicy::default());
        let id = store.submit(job("qubits 13\nmeasure 0", 10), 0);
        run_all(&store, 0);
        let log = store.log();
        assert_eq!(log[0].state, JobState::Failed);
        assert!(log[0].error.as_deref().unwrap().contains("at most 12"));
        assert!(log[0].result.is_none());
        let Some(ResultsLookup::Done(body)) = store.results(&id) else { panic!() };
        assert!(matches!(serde_json::from_slice(&body).unwrap(), ResultsBody::Failed { .. }));
    }

    #[test]
    fn seeds_survive_restart() {
        // Same id and payload on a fresh store give the same counts.
        let p = job("qubits 2\nh 0\ncx 0 1\nmeasure 0\nmeasure 1", 1000).payload;
        let a = simulate(&p.circuit, p.shots, seed_for("ABC")).unwrap();
        let b = simulate(&p.circuit, p.shots, seed_for("ABC")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn jittered_delays_are_bounded() {
        let store = JobStore::new(QueuePolicy {
            delay_ms: 10,
            jitter_ms: 40,
            jitter_seed: 3,
        });
        for _ in 0..50 {
            store.submit(job("qubits 1\nmeasure 0", 1), 0);
        }
        assert!(store.start_due(9).is_empty());
        let mut started = store.start_due(30).len();
        started += store.start_due(50).len();
        assert_eq!(started, 50);
    }
}
