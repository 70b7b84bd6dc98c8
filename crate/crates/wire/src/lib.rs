//! JSON bodies exchanged between the testbed services: the cloud job API
//! and the consolidated records the interceptor hands to the collector.

pub mod api;
pub mod record;

pub use api::{ErrorBody, JobState, JobStatusBody, ResultsBody, SubmitResponse};
pub use record::{
    CapturedResults, CapturedSubmission, ConsolidatedRecord, PartialReason, RecordTimestamps,
    SubmissionMetadata,
};

/// Milliseconds since the Unix epoch.
pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub const JOBS_PATH: &str = "/api/v1/jobs";
pub const RECORDS_PATH: &str = "/api/v1/records";
pub const REPORT_PATH: &str = "/api/v1/report";
pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";
