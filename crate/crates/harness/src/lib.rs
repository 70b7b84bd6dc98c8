//! End-to-end experiments.
//!
//! A [`Lab`] provisions a legitimate and a rogue root, then each scenario
//! starts the cloud, the collector and (for intercepted runs) the
//! interceptor in-process, drives a workload through them with the client,
//! waits for quiescence and snapshots every party's view. The verification
//! functions compare those snapshots: [`verify_transparency`] between a
//! baseline and an intercepted run, [`verify_correlation`] between the
//! cloud's job log and the collector's store.

pub mod pki;
pub mod scenario;
pub mod verify;

pub use pki::{gen_ca, CaKind, LabPki, PemPair};
pub use scenario::{
    run, run_baseline, run_intercepted, CollectorFault, InterceptorObservation, Lab, Mode, RunOptions, ScenarioResult,
    TokenMode,
};
pub use verify::{
    jobs_verdict, verify_correlation, verify_transparency, CheckVerdict, Status, UsageError, Verdicts,
};
