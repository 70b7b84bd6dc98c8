//! Verdicts over finished scenarios. Details name jobs by workload index
//! wherever possible so that two runs of the same workload produce the
//! same text.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use qspy_client::{transcript_diff, JobReport, ScenarioRun, Verdict};
use qspy_cloud::JobLogEntry;
use qspy_collector::StoredRecord;
use qspy_wire::{JobState, PartialReason, JOBS_PATH};
use serde::{Deserialize, Serialize};

use crate::scenario::{Mode, ScenarioResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckVerdict {
    pub status: Status,
    pub detail: String,
}

impl CheckVerdict {
    pub fn pass(detail: impl Into<String>) -> Self {
        Self {
            status: Status::Pass,
            detail: detail.into(),
        }
    }

    pub fn fail(detail: impl Into<String>) -> Self {
        Self {
            status: Status::Fail,
            detail: detail.into(),
        }
    }

    fn from_problems(problems: Vec<String>, ok: impl Into<String>) -> Self {
        if problems.is_empty() {
            Self::pass(ok)
        } else {
            Self::fail(problems.join("; "))
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

impl fmt::Display for CheckVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
        };
        write!(f, "{s}: {}", self.detail)
    }
}

pub type Verdicts = BTreeMap<String, CheckVerdict>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum UsageError {
    #[error("scenarios ran different workloads: {baseline:?} vs {intercepted:?}")]
    WorkloadMismatch { baseline: String, intercepted: String },
    #[error("expected a {expected:?} scenario, got {got:?}")]
    WrongMode { expected: Mode, got: Mode },
}

/// PASS when every planned job finished without a client-side error.
pub fn jobs_verdict(jobs: &[JobReport]) -> CheckVerdict {
    let failed: Vec<String> = jobs
        .iter()
        .filter_map(|j| {
            let kind = serde_json::to_value(j.error.as_ref()?).ok()?["kind"].as_str()?.to_string();
            Some(format!("job {}: {kind}", j.job_index))
        })
        .collect();
    if failed.is_empty() {
        CheckVerdict::pass(format!("{}/{} jobs completed", jobs.len(), jobs.len()))
    } else {
        CheckVerdict::fail(format!("{}/{} jobs failed ({})", failed.len(), jobs.len(), failed.join(", ")))
    }
}

/// Checks that the intercepted run is indistinguishable from the baseline
/// for the client, and that the bytes the client exchanged are the bytes
/// the cloud saw.
pub fn verify_transparency(baseline: &ScenarioResult, intercepted: &ScenarioResult) -> Result<CheckVerdict, UsageError> {
    for (r, expected) in [(baseline, Mode::Baseline), (intercepted, Mode::Intercepted)] {
        if r.mode != expected {
            return Err(UsageError::WrongMode { expected, got: r.mode });
        }
    }
    if baseline.options.workload != intercepted.options.workload {
        return Err(UsageError::WorkloadMismatch {
            baseline: baseline.options.workload.clone(),
            intercepted: intercepted.options.workload.clone(),
        });
    }

    let mut problems = Vec::new();
    let diff = transcript_diff(&baseline.transcript, &intercepted.transcript);
    if diff.verdict != Verdict::Equal {
        let shown: Vec<String> = diff.differences.iter().take(5).map(|d| d.to_string()).collect();
        problems.push(format!(
            "transcripts differ in {} place(s): {}",
            diff.differences.len(),
            shown.join(" | ")
        ));
    }
    for (name, r) in [("baseline", baseline), ("intercepted", intercepted)] {
        let auth = r.transcript.entries.iter().filter(|e| e.response_status == Some(401)).count();
        let tls = r.transcript.entries.iter().filter(|e| e.is_tls_error()).count();
        if auth > 0 {
            problems.push(format!("{auth} authentication failure(s) in {name} run"));
        }
        if tls > 0 {
            problems.push(format!("{tls} TLS error(s) in {name} run"));
        }
    }
    let (checked, mismatches) = cross_check_bodies(intercepted);
    problems.extend(mismatches);

    let jobs = intercepted.transcript.job_indices().len();
    Ok(CheckVerdict::from_problems(
        problems,
        format!("diff EQUAL over {jobs} jobs; 0 auth failures; 0 TLS errors; {checked} bodies match the cloud log"),
    ))
}

/// Compares the client's submission bodies and results bodies with the
/// cloud's record of what it received and sent.
fn cross_check_bodies(r: &ScenarioResult) -> (usize, Vec<String>) {
    let log: HashMap<&str, &JobLogEntry> = r.cloud_job_log.iter().map(|e| (e.job_id.as_str(), e)).collect();
    let mut checked = 0;
    let mut problems = Vec::new();
    for e in &r.transcript.entries {
        let (Some(200), Some(job_id)) = (e.response_status, e.job_id.as_deref()) else { continue };
        let Some(entry) = log.get(job_id) else {
            problems.push(format!("job {}: id unknown to the cloud", e.job_index));
            continue;
        };
        if e.method == "POST" && e.path == JOBS_PATH {
            checked += 1;
            if e.request_body_hash != entry.submission_sha256 {
                problems.push(format!(
                    "job {}: submission body sha256 {} at client, {} at cloud",
                    e.job_index, e.request_body_hash, entry.submission_sha256
                ));
            }
        } else if e.path.ends_with("/results") {
            checked += 1;
            if e.response_body_hash != entry.results_body_sha256 {
                problems.push(format!(
                    "job {}: results body sha256 {} at client, {} at cloud",
                    e.job_index,
                    e.response_body_hash.as_deref().unwrap_or("-"),
                    entry.results_body_sha256.as_deref().unwrap_or("-")
                ));
            }
        }
    }
    (checked, problems)
}

/// Matches every cloud job to the collector's records. A job whose results
/// were served needs exactly one COMPLETE record with the same circuit and
/// counts; a job whose results were never fetched needs exactly one
/// PARTIAL(ttl_expired) record with the same circuit. Every record must
/// belong to some job.
pub fn verify_correlation(cloud_job_log: &[JobLogEntry], collector: &[StoredRecord]) -> CheckVerdict {
    let mut by_job: BTreeMap<&str, Vec<&StoredRecord>> = BTreeMap::new();
    let mut problems = Vec::new();
    for r in collector {
        match r.record.job_id.as_deref() {
            Some(id) => by_job.entry(id).or_default().push(r),
            None => problems.push(format!("record {} has no job id", r.store_id)),
        }
    }
    let known: HashMap<&str, &JobLogEntry> = cloud_job_log.iter().map(|e| (e.job_id.as_str(), e)).collect();
    for (id, recs) in &by_job {
        if !known.contains_key(id) {
            problems.push(format!("record(s) {:?} name job {id} unknown to the cloud", store_ids(recs)));
        }
    }

    let (mut complete, mut partial) = (0, 0);
    for job in cloud_job_log {
        let id = job.job_id.as_str();
        let recs = by_job.get(id).map(Vec::as_slice).unwrap_or(&[]);
        let polled = job.results_served > 0;
        let rec = match recs {
            [] => {
                problems.push(format!("job {id}: no record"));
                continue;
            }
            [r] => r,
            many => {
                problems.push(format!("job {id}: {} records {:?}", many.len(), store_ids(many)));
                continue;
            }
        };
        let circuit_sha = rec.record.circuit_payload.as_ref().and_then(|c| c.circuit_sha256());
        if circuit_sha.as_deref() != Some(job.circuit_sha256.as_str()) {
            problems.push(format!("job {id}: circuit hash mismatch"));
        }
        if polled {
            if !rec.record.complete {
                problems.push(format!("job {id}: record is PARTIAL but results were served"));
                continue;
            }
            complete += 1;
            match (&job.result, rec.record.result()) {
                (Some(a), Some(b)) if a.counts == b.counts && a.shots == b.shots => {}
                (None, None) if job.state == JobState::Failed => {}
                _ => problems.push(format!("job {id}: counts differ")),
            }
        } else {
            if rec.record.complete || rec.record.partial_reason != Some(PartialReason::TtlExpired) {
                problems.push(format!("job {id}: never polled but record is not PARTIAL(ttl_expired)"));
                continue;
            }
            partial += 1;
        }
    }
    CheckVerdict::from_problems(
        problems,
        format!("{complete} COMPLETE and {partial} PARTIAL(ttl_expired) records match the cloud job log"),
    )
}

fn store_ids(recs: &[&StoredRecord]) -> Vec<u64> {
    recs.iter().map(|r| r.store_id).collect()
}

/// Verdicts for a single finished run.
pub fn run_verdicts(mode: Mode, run: &ScenarioRun, result: &ScenarioResult) -> Verdicts {
    let mut v = Verdicts::new();
    v.insert("jobs".into(), jobs_verdict(&run.jobs));
    match mode {
        Mode::Baseline => {
            let n = result.collector_snapshot.len();
            let iso = if n == 0 {
                CheckVerdict::pass("collector holds 0 records")
            } else {
                CheckVerdict::fail(format!("collector holds {n} record(s) after a direct run"))
            };
            v.insert("isolation".into(), iso);
        }
        Mode::Intercepted => {
            v.insert(
                "correlation".into(),
                verify_correlation(&result.cloud_job_log, &result.collector_snapshot),
            );
            let live = result.interceptor.as_ref().map_or(0, |i| i.table_len_at_quiescence);
            let drained = if live == 0 {
                CheckVerdict::pass("correlation table empty at quiescence")
            } else {
                CheckVerdict::fail(format!("{live} correlation entries live at quiescence"))
            };
            v.insert("table_drained".into(), drained);
        }
    }
    v
}
