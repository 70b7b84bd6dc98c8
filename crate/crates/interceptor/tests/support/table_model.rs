//! Random operation sequences against `CorrelationTable`, with the
//! invariants checked after every step. Shared with the acceptance suite.

use std::collections::{BTreeMap, HashMap, HashSet};

use proptest::prelude::*;
use qspy_interceptor::table::{BindOutcome, CorrelateOutcome, CorrelationTable, EntryState, TableConfig};
use qspy_wire::{ConsolidatedRecord, SubmissionMetadata};

const BELL: &str = r#"{"circuit":"qubits 2\nh 0\ncx 0 1\nmeasure 0\nmeasure 1","shots":100,"backend_name":"sim"}"#;

#[derive(Debug, Clone)]
pub enum Op {
    Capture { garbage: bool },
    /// Answers the nth-oldest flow ever captured.
    Bind { flow: usize, status: u16, job: Option<u8> },
    Result { job: u8, ready: bool },
    Sweep,
    Tick(u64),
}

pub fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => any::<bool>().prop_map(|garbage| Op::Capture { garbage }),
        3 => (0..12usize, prop::sample::select(vec![200u16, 200, 200, 401, 500]), prop::option::weighted(0.9, 0..6u8))
            .prop_map(|(flow, status, job)| Op::Bind { flow, status, job }),
        3 => (0..6u8, any::<bool>()).prop_map(|(job, ready)| Op::Result { job, ready }),
        1 => Just(Op::Sweep),
        2 => (1..80u64).prop_map(Op::Tick),
    ]
}

fn meta() -> SubmissionMetadata {
    SubmissionMetadata {
        host: "localhost".into(),
        path: "/api/v1/jobs".into(),
        auth_subject: None,
        headers: BTreeMap::new(),
        client_addr: "127.0.0.1:1".into(),
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub exported: Vec<ConsolidatedRecord>,
    pub captured: usize,
    pub remaining: usize,
}

/// Runs `ops` and checks every invariant; returns the exported records.
pub fn run(cfg: TableConfig, ops: &[Op]) -> Result<Outcome, TestCaseError> {
    let mut t = CorrelationTable::new(cfg).with_journal();
    let mut now = 1_000u64;
    let mut flows: Vec<String> = Vec::new();
    let mut out = Outcome::default();
    let unique_keys = cfg.bound_ttl_ms > 1_000_000;

    for op in ops {
        match op {
            Op::Capture { garbage } => {
                let flow = format!("flow-{}", flows.len());
                let body: &[u8] = if *garbage { b"{nope" } else { BELL.as_bytes() };
                prop_assert!(t.capture_submission(&flow, body, meta(), now));
                flows.push(flow);
                out.captured += 1;
            }
            Op::Bind { flow, status, job } => {
                let Some(flow) = flows.get(*flow) else { continue };
                let was_pending = t.entry_for_flow(flow).is_some();
                let body = match job {
                    Some(j) => format!(r#"{{"job_id":"J{j}"}}"#),
                    None => "{}".into(),
                };
                let res = t.bind_job_id(flow, *status, body.as_bytes(), now);
                prop_assert_eq!(was_pending, res != BindOutcome::NoEntry);
                if let BindOutcome::Bound { job_id } = &res {
                    prop_assert_eq!(t.entry_for_job(job_id).map(|e| e.flow_id.as_str()), Some(flow.as_str()));
                }
            }
            Op::Result { job, ready } => {
                let id = format!("J{job}");
                let body = if *ready {
                    format!(r#"{{"job_id":"{id}","counts":{{"00":1}},"shots":1,"seed":1}}"#)
                } else {
                    format!(r#"{{"job_id":"{id}","state":"RUNNING"}}"#)
                };
                let before = t.len();
                match t.correlate_result(&id, if *ready { 200 } else { 202 }, body.as_bytes(), now) {
                    CorrelateOutcome::Complete(r) => {
                        prop_assert!(r.complete && r.is_well_formed());
                        prop_assert_eq!(t.len() + 1, before);
                        out.exported.push(*r);
                    }
                    CorrelateOutcome::Partial(r) => {
                        prop_assert!(r.is_well_formed());
                        prop_assert_eq!(t.len(), before);
                        out.exported.push(*r);
                    }
                    CorrelateOutcome::NotReady | CorrelateOutcome::AlreadyExported => {
                        prop_assert_eq!(t.len(), before);
                    }
                }
            }
            Op::Sweep => {
                for r in t.evict_stale(now) {
                    prop_assert!(!r.complete && r.is_well_formed());
                    out.exported.push(r);
                }
            }
            Op::Tick(dt) => now += dt,
        }
        check_table(&t)?;
    }

    // Every journalled history is a legal path starting at PENDING_ID.
    let mut last: HashMap<&str, EntryState> = HashMap::new();
    for tr in t.journal() {
        prop_assert!(tr.from.can_advance_to(tr.to), "{:?}", tr);
        let prev = last.insert(&tr.flow_id, tr.to).unwrap_or(EntryState::PendingId);
        prop_assert_eq!(prev, tr.from);
    }
    // Conservation: every capture is either live or reached a terminal state.
    let terminal = last.values().filter(|s| matches!(s, EntryState::Complete | EntryState::Evicted)).count();
    prop_assert_eq!(terminal + t.len(), out.captured);

    if unique_keys {
        let mut keys = HashSet::new();
        let mut jobs = HashSet::new();
        for r in &out.exported {
            prop_assert!(keys.insert(r.idempotency_key()), "duplicate export {:?}", r);
            if let Some(id) = &r.job_id {
                prop_assert!(jobs.insert(id.clone()), "job {} exported twice", id);
            }
        }
    }
    out.remaining = t.len();
    Ok(out)
}

fn check_table(t: &CorrelationTable) -> Result<(), TestCaseError> {
    prop_assert_eq!(t.len(), t.pending_len() + t.bound_len());
    prop_assert_eq!(t.entries().count(), t.len());
    for e in t.entries() {
        prop_assert!(e.is_consistent(), "{:?}", e);
        prop_assert!(matches!(e.state, EntryState::PendingId | EntryState::Bound));
        if let Some(id) = &e.job_id {
            prop_assert_eq!(t.entry_for_job(id).map(|x| &x.flow_id), Some(&e.flow_id));
        } else {
            prop_assert!(t.entry_for_flow(&e.flow_id).is_some());
        }
    }
    Ok(())
}
