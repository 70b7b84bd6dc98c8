//! Victim-side workload driver.
//!
//! Builds circuits from a workload description, submits them to the job API
//! (directly or through a CONNECT proxy), polls for results, and records
//! everything the client can observe in a [`ClientTranscript`]. Two
//! transcripts of the same workload can be compared with
//! [`transcript_diff`].

pub mod config;
pub mod diff;
pub mod driver;
pub mod transcript;
pub mod workload;

pub use config::{ClientConfig, ConfigError};
pub use diff::{transcript_diff, DiffReport, Difference, LengthMismatch, Verdict};
pub use driver::{run_scenario, Client, ClientError, JobReport, ScenarioRun};
pub use transcript::{ClientTranscript, Recorder, ResultShape, TranscriptEntry};
pub use workload::{prepare_workload, PlannedJob, Template, WorkloadError};
