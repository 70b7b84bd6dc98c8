//! Comparing two transcripts of the same workload.
//!
//! Entries are grouped by job. Within a job, consecutive 202 polls collapse
//! into one pending step, job ids are replaced by a placeholder, and
//! results bodies are compared by shape because different job ids mean
//! different sampling seeds. Latency and the TLS chain are reported but do
//! not affect the verdict.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::transcript::{normalize_path, ClientTranscript, ResultShape, TranscriptEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Equal,
    Different,
}

/// One field that differs between the two runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Difference {
    pub job_index: usize,
    /// Index of the logical step within the job, if the difference is
    /// tied to one.
    pub step: Option<usize>,
    pub field: String,
    pub a: String,
    pub b: String,
}

impl fmt::Display for Difference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(s) => write!(f, "job {} step {s}: {} `{}` vs `{}`", self.job_index, self.field, self.a, self.b),
            None => write!(f, "job {}: {} `{}` vs `{}`", self.job_index, self.field, self.a, self.b),
        }
    }
}

/// Differing numbers of pending polls; timing-dependent, so not fatal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthMismatch {
    pub job_index: usize,
    pub a_polls: usize,
    pub b_polls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TlsSummary {
    pub a_fingerprints: BTreeSet<String>,
    pub b_fingerprints: BTreeSet<String>,
    pub differs: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub a_mean_ms: f64,
    pub b_mean_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffReport {
    pub verdict: Verdict,
    pub differences: Vec<Difference>,
    pub length_mismatches: Vec<LengthMismatch>,
    pub tls: TlsSummary,
    pub latency: LatencySummary,
}

#[derive(Debug, Clone, PartialEq)]
enum Body {
    Hash(Option<String>),
    Shape(ResultShape),
    Error(String),
}

impl fmt::Display for Body {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Body::Hash(Some(h)) => write!(f, "{h}"),
            Body::Hash(None) => write!(f, "-"),
            Body::Shape(s) => write!(f, "{}", serde_json::to_string(s).unwrap_or_default()),
            Body::Error(kind) => write!(f, "error:{kind}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Step {
    method: String,
    path: String,
    request_body_hash: String,
    status: Option<u16>,
    body: Body,
}

struct JobTrace {
    steps: Vec<Step>,
    pending_polls: usize,
    /// Entries whose job id disagrees with the one issued at submission.
    inconsistent_ids: Vec<u64>,
}

fn is_pending(e: &TranscriptEntry) -> bool {
    e.response_status == Some(202)
}

fn trace(entries: &[&TranscriptEntry]) -> JobTrace {
    let issued = entries.iter().find_map(|e| e.job_id.clone());
    let mut steps = Vec::new();
    let mut pending_polls = 0;
    let mut inconsistent_ids = Vec::new();
    let mut prev_pending = false;
    for e in entries {
        if e.job_id.is_some() && e.job_id != issued {
            inconsistent_ids.push(e.sequence_no);
        }
        let path = normalize_path(&e.path, e.job_id.as_deref());
        let pending = is_pending(e);
        if pending {
            pending_polls += 1;
            if prev_pending {
                continue;
            }
        }
        prev_pending = pending;
        let body = match (&e.error, e.response_status, &e.result_shape) {
            (Some(err), _, _) => Body::Error(err.split(':').next().unwrap_or_default().to_string()),
            // A pending body only carries the job id and state.
            (None, Some(202), _) => Body::Hash(None),
            (None, Some(200), Some(shape)) => Body::Shape(shape.clone()),
            _ => Body::Hash(e.normalized_body_hash.clone()),
        };
        steps.push(Step {
            method: e.method.clone(),
            path,
            request_body_hash: e.request_body_hash.clone(),
            status: e.response_status,
            body,
        });
    }
    JobTrace {
        steps,
        pending_polls,
        inconsistent_ids,
    }
}

fn mean_latency(t: &ClientTranscript) -> f64 {
    if t.entries.is_empty() {
        return 0.0;
    }
    t.entries.iter().map(|e| e.latency_ms).sum::<f64>() / t.entries.len() as f64
}

fn fingerprints(t: &ClientTranscript) -> BTreeSet<String> {
    t.entries
        .iter()
        .flat_map(|e| e.tls_peer_chain_fingerprints.iter().cloned())
        .collect()
}

fn status_text(s: Option<u16>) -> String {
    s.map_or_else(|| "none".into(), |s| s.to_string())
}

pub fn transcript_diff(a: &ClientTranscript, b: &ClientTranscript) -> DiffReport {
    let mut differences = Vec::new();
    let mut length_mismatches = Vec::new();

    let jobs_a = a.job_indices();
    let jobs_b = b.job_indices();
    let all: BTreeSet<usize> = jobs_a.iter().chain(jobs_b.iter()).copied().collect();
    for job in all {
        let (ea, eb) = (a.job(job), b.job(job));
        if ea.is_empty() || eb.is_empty() {
            differences.push(Difference {
                job_index: job,
                step: None,
                field: "present".into(),
                a: (!ea.is_empty()).to_string(),
                b: (!eb.is_empty()).to_string(),
            });
            continue;
        }
        let (ta, tb) = (trace(&ea), trace(&eb));
        for (run, t) in [("a", &ta), ("b", &tb)] {
            if !t.inconsistent_ids.is_empty() {
                differences.push(Difference {
                    job_index: job,
                    step: None,
                    field: format!("job_id consistency in run {run}"),
                    a: format!("{:?}", t.inconsistent_ids),
                    b: String::new(),
                });
            }
        }
        if ta.pending_polls != tb.pending_polls {
            length_mismatches.push(LengthMismatch {
                job_index: job,
                a_polls: ta.pending_polls,
                b_polls: tb.pending_polls,
            });
        }
        // A pending step present in one run only is scheduling, not content.
        let settled = |t: &JobTrace| -> Vec<Step> { t.steps.iter().filter(|s| s.status != Some(202)).cloned().collect() };
        let (sa, sb) = (settled(&ta), settled(&tb));
        if sa.len() != sb.len() {
            differences.push(Difference {
                job_index: job,
                step: None,
                field: "exchange count".into(),
                a: sa.len().to_string(),
                b: sb.len().to_string(),
            });
        }
        for (i, (x, y)) in sa.iter().zip(sb.iter()).enumerate() {
            let mut push = |field: &str, l: String, r: String| {
                differences.push(Difference {
                    job_index: job,
                    step: Some(i),
                    field: field.into(),
                    a: l,
                    b: r,
                })
            };
            if x.method != y.method {
                push("method", x.method.clone(), y.method.clone());
            }
            if x.path != y.path {
                push("path", x.path.clone(), y.path.clone());
            }
            if x.request_body_hash != y.request_body_hash {
                push("request_body_hash", x.request_body_hash.clone(), y.request_body_hash.clone());
            }
            if x.status != y.status {
                push("response_status", status_text(x.status), status_text(y.status));
            }
            if x.body != y.body {
                push("response_body", x.body.to_string(), y.body.to_string());
            }
        }
    }

    let (fa, fb) = (fingerprints(a), fingerprints(b));
    DiffReport {
        verdict: if differences.is_empty() { Verdict::Equal } else { Verdict::Different },
        differences,
        length_mismatches,
        tls: TlsSummary {
            differs: fa != fb,
            a_fingerprints: fa,
            b_fingerprints: fb,
        },
        latency: LatencySummary {
            a_mean_ms: mean_latency(a),
            b_mean_ms: mean_latency(b),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(job: usize, id: &str, method: &str, path: &str, status: u16, body: &str) -> TranscriptEntry {
        let shape = path.ends_with("/results").then(|| ResultShape::of(body.as_bytes()));
        TranscriptEntry {
            sequence_no: 0,
            job_index: job,
            job_id: Some(id.into()),
            method: method.into(),
            path: path.into(),
            request_body_hash: if method == "POST" { "req".into() } else { "empty".into() },
            response_status: Some(status),
            response_body_hash: Some(qspy_circuit::digest::sha256_hex(body)),
            normalized_body_hash: Some(crate::transcript::normalized_hash(body.as_bytes(), Some(id))),
            result_shape: shape,
            tls_peer_chain_fingerprints: vec![format!("fp-{id}")],
            latency_ms: 1.0,
            error: None,
        }
    }

    fn run(id: &str, polls: usize, counts: &str) -> ClientTranscript {
        let mut entries = vec![entry(0, id, "POST", "/api/v1/jobs", 200, &format!(r#"{{"job_id":"{id}"}}"#))];
        let path = format!("/api/v1/jobs/{id}/results");
        for _ in 0..polls {
            entries.push(entry(0, id, "GET", &path, 202, &format!(r#"{{"job_id":"{id}","state":"QUEUED"}}"#)));
        }
        entries.push(entry(
            0,
            id,
            "GET",
            &path,
            200,
            &format!(r#"{{"job_id":"{id}","counts":{counts},"shots":10,"seed":1}}"#),
        ));
        for (i, e) in entries.iter_mut().enumerate() {
            e.sequence_no = i as u64 + 1;
        }
        ClientTranscript {
            scenario_label: id.into(),
            started_at: 0,
            entries,
        }
    }

    #[test]
    fn identical_runs_are_equal() {
        let r = diff_self(&run("A", 2, r#"{"00":4,"11":6}"#));
        assert_eq!(r.verdict, Verdict::Equal);
        assert!(!r.tls.differs);
    }

    fn diff_self(t: &ClientTranscript) -> DiffReport {
        transcript_diff(t, t)
    }

    #[test]
    fn ids_polls_and_counts_are_normalized() {
        let r = transcript_diff(&run("A", 1, r#"{"00":4,"11":6}"#), &run("B", 4, r#"{"00":5,"11":5}"#));
        assert_eq!(r.verdict, Verdict::Equal, "{:?}", r.differences);
        assert_eq!(r.length_mismatches, vec![LengthMismatch { job_index: 0, a_polls: 1, b_polls: 4 }]);
        assert!(r.tls.differs);
    }

    #[test]
    fn missing_pending_phase_is_not_a_difference() {
        let r = transcript_diff(&run("A", 0, r#"{"1":10}"#), &run("B", 3, r#"{"1":10}"#));
        assert_eq!(r.verdict, Verdict::Equal);
    }

    #[test]
    fn shot_mismatch_is_pinpointed() {
        let a = run("A", 0, r#"{"00":4,"11":6}"#);
        let mut b = run("B", 0, r#"{"00":4,"11":7}"#);
        b.entries[0].request_body_hash = "other-req".into();
        let r = transcript_diff(&a, &b);
        assert_eq!(r.verdict, Verdict::Different);
        let fields: Vec<(&str, Option<usize>)> = r.differences.iter().map(|d| (d.field.as_str(), d.step)).collect();
        assert_eq!(fields, vec![("request_body_hash", Some(0)), ("response_body", Some(1))]);
    }

    #[test]
    fn status_change_and_missing_job() {
        let a = run("A", 0, r#"{"1":10}"#);
        let mut b = a.clone();
        b.entries[1].response_status = Some(401);
        b.entries[1].result_shape = None;
        assert_eq!(transcript_diff(&a, &b).differences[0].field, "response_status");
        let empty = ClientTranscript::default();
        assert_eq!(transcript_diff(&a, &empty).differences[0].field, "present");
    }

    #[test]
    fn inconsistent_job_id_within_a_run() {
        let mut a = run("A", 0, r#"{"1":10}"#);
        a.entries[1].job_id = Some("Z".into());
        let r = transcript_diff(&a, &run("B", 0, r#"{"1":10}"#));
        assert_eq!(r.verdict, Verdict::Different);
        assert!(r.differences.iter().any(|d| d.field.starts_with("job_id consistency")));
    }
}
