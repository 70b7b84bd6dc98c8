//! Structured event stream: one JSON object per line.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};

use qspy_wire::{now_ms, PartialReason};
use serde::Serialize;

use crate::filter::FlowClass;
use crate::table::EvictReason;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    FlowClassified {
        flow_id: String,
        class: FlowClass,
        method: String,
        host: String,
        path: String,
    },
    EntryBound {
        flow_id: String,
        job_id: String,
    },
    EntryEvicted {
        flow_id: Option<String>,
        job_id: Option<String>,
        reason: EvictReason,
    },
    RecordEmitted {
        job_id: Option<String>,
        complete: bool,
        partial_reason: Option<PartialReason>,
    },
    RecordExported {
        job_id: Option<String>,
        idempotency_key: String,
        complete: bool,
        duplicate: bool,
    },
    RecordSpooled {
        job_id: Option<String>,
        idempotency_key: String,
        reason: String,
    },
    TunnelOpened {
        authority: String,
        intercepted: bool,
    },
    UpstreamFailed {
        flow_id: String,
        error: String,
    },
}

#[derive(Serialize)]
struct Line<'a> {
    ts: u64,
    #[serde(flatten)]
    event: &'a Event,
}

/// Writes events to an optional file and to `tracing`. Cheap to clone.
#[derive(Clone, Default)]
pub struct EventLog {
    file: Option<Arc<Mutex<File>>>,
}

impl EventLog {
    pub fn to_file(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            file: Some(Arc::new(Mutex::new(file))),
        })
    }

    pub fn emit(&self, event: Event) {
        let line = serde_json::to_string(&Line { ts: now_ms(), event: &event }).expect("events serialize");
        tracing::debug!(target: "qspy_interceptor::events", "{line}");
        if let Some(f) = &self.file {
            let mut f = f.lock().expect("event log lock");
            if let Err(e) = writeln!(f, "{line}") {
                tracing::warn!(error = %e, "event log write failed");
            }
        }
    }
}
