use std::collections::BTreeMap;
use std::fmt;

use qspy_circuit::MeasurementResult;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobState {
    Queued,
    Running,
    Completed,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Completed | JobState::Failed)
    }

    /// Legal lifecycle edges: QUEUED -> RUNNING -> {COMPLETED, FAILED}.
    pub fn can_advance_to(self, next: JobState) -> bool {
        matches!(
            (self, next),
            (JobState::Queued, JobState::Running)
                | (JobState::Running, JobState::Completed)
                | (JobState::Running, JobState::Failed)
        )
    }
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JobState::Queued => "QUEUED",
            JobState::Running => "RUNNING",
            JobState::Completed => "COMPLETED",
            JobState::Failed => "FAILED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub job_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobStatusBody {
    pub job_id: String,
    pub state: JobState,
    pub created_at: u64,
    pub started_at: Option<u64>,
    pub completed_at: Option<u64>,
}

/// Body of `GET /api/v1/jobs/{id}/results`.
///
/// 200 carries `Ready` or `Failed`; 202 carries `Pending`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResultsBody {
    Ready {
        job_id: String,
        counts: BTreeMap<String, u64>,
        shots: u64,
        seed: u64,
    },
    Failed {
        job_id: String,
        state: JobState,
        error: String,
    },
    Pending {
        job_id: String,
        state: JobState,
    },
}

impl ResultsBody {
    pub fn ready(job_id: &str, r: &MeasurementResult) -> Self {
        ResultsBody::Ready {
            job_id: job_id.to_string(),
            counts: r.counts.clone(),
            shots: r.shots,
            seed: r.seed,
        }
    }

    pub fn measurement(&self) -> Option<MeasurementResult> {
        match self {
            ResultsBody::Ready { counts, shots, seed, .. } => Some(MeasurementResult {
                counts: counts.clone(),
                shots: *shots,
                seed: *seed,
            }),
            _ => None,
        }
    }
}

/// Error body used by every service. `reason` is a stable machine-readable
/// code such as `expired` or `not_found`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub reason: String,
}

impl ErrorBody {
    pub fn new(error: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            error: error.into(),
            reason: reason.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_names() {
        assert_eq!(serde_json::to_string(&JobState::Queued).unwrap(), "\"QUEUED\"");
        assert_eq!(JobState::Completed.to_string(), "COMPLETED");
    }

    #[test]
    fn lifecycle_edges() {
        use JobState::*;
        assert!(Queued.can_advance_to(Running));
        assert!(Running.can_advance_to(Failed));
        assert!(!Queued.can_advance_to(Completed));
        assert!(!Completed.can_advance_to(Running));
        assert!(!Running.can_advance_to(Queued));
    }

    #[test]
    fn results_body_variants_parse() {
        let ready: ResultsBody =
            serde_json::from_str(r#"{"job_id":"A","counts":{"1":100},"shots":100,"seed":7}"#).unwrap();
        assert_eq!(ready.measurement().unwrap().total(), 100);
        let pending: ResultsBody = serde_json::from_str(r#"{"job_id":"A","state":"RUNNING"}"#).unwrap();
        assert!(matches!(pending, ResultsBody::Pending { state: JobState::Running, .. }));
        let failed: ResultsBody =
            serde_json::from_str(r#"{"job_id":"A","state":"FAILED","error":"too many"}"#).unwrap();
        assert!(matches!(failed, ResultsBody::Failed { .. }));
    }
}
