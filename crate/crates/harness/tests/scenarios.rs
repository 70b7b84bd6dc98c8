use qspylab::{
    run_baseline, run_intercepted, verify_correlation, verify_transparency, CollectorFault, Lab, RunOptions,
    ScenarioResult, Status, TokenMode, UsageError,
};
use qspy_wire::PartialReason;

fn lab() -> (tempfile::TempDir, Lab) {
    let dir = tempfile::tempdir().unwrap();
    let lab = Lab::create(dir.path()).unwrap();
    (dir, lab)
}

fn assert_all_pass(r: &ScenarioResult) {
    for (name, v) in &r.verdicts {
        assert!(v.passed(), "{name}: {v}");
    }
}

#[tokio::test]
async fn baseline_leaves_collector_empty() {
    let (_d, lab) = lab();
    let r = run_baseline(&lab, &RunOptions::new("5x bell")).await.unwrap();
    assert_all_pass(&r);
    assert_eq!(r.jobs.iter().filter(|j| j.result.is_some()).count(), 5);
    assert_eq!(r.cloud_job_log.len(), 5);
    assert!(r.collector_snapshot.is_empty());
    assert_eq!(r.verdicts["jobs"].detail, "5/5 jobs completed");
}

#[tokio::test]
async fn forged_token_is_refused_everywhere() {
    let (_d, lab) = lab();
    let mut opts = RunOptions::new("3x bell");
    opts.token = TokenMode::Forged;
    let r = run_baseline(&lab, &opts).await.unwrap();
    assert!(r.transcript.entries.iter().all(|e| e.response_status == Some(401)));
    assert_eq!(r.verdicts["jobs"].status, Status::Fail);
    assert!(r.verdicts["isolation"].passed());
    assert!(r.cloud_job_log.is_empty());

    let r = run_intercepted(&lab, &opts).await.unwrap();
    assert!(r.collector_snapshot.is_empty());
    assert!(r.verdicts["table_drained"].passed());
}

#[tokio::test]
async fn empty_workload_passes_trivially() {
    let (_d, lab) = lab();
    let b = run_baseline(&lab, &RunOptions::new("")).await.unwrap();
    let i = run_intercepted(&lab, &RunOptions::new("")).await.unwrap();
    assert!(b.transcript.entries.is_empty());
    assert_all_pass(&b);
    assert_all_pass(&i);
    assert!(verify_transparency(&b, &i).unwrap().passed());
}

#[tokio::test]
async fn intercepted_run_is_transparent_and_fully_captured() {
    let (_d, lab) = lab();
    let opts = RunOptions::new("5x bell");
    let b = run_baseline(&lab, &opts).await.unwrap();
    let i = run_intercepted(&lab, &opts).await.unwrap();
    assert_all_pass(&i);
    assert_eq!(i.collector_snapshot.len(), 5);
    assert!(i.collector_snapshot.iter().all(|r| r.record.complete));
    let v = verify_transparency(&b, &i).unwrap();
    assert!(v.passed(), "{v}");
    assert_eq!(
        i.verdicts["correlation"].detail,
        "5 COMPLETE and 0 PARTIAL(ttl_expired) records match the cloud job log"
    );
    let obs = i.interceptor.as_ref().unwrap();
    assert_eq!(obs.stats.records_complete, 5);
    assert_eq!(obs.stats.leaves_minted, 1);
}

#[tokio::test]
async fn mutating_proxy_is_caught() {
    let (_d, lab) = lab();
    let b = run_baseline(&lab, &RunOptions::new("2x bell")).await.unwrap();
    let mut opts = RunOptions::new("2x bell");
    opts.mutate_results = true;
    let i = run_intercepted(&lab, &opts).await.unwrap();
    let v = verify_transparency(&b, &i).unwrap();
    assert_eq!(v.status, Status::Fail);
    assert!(v.detail.contains("job 0: results body sha256"), "{v}");
    assert!(v.detail.contains("job 1: results body sha256"), "{v}");
}

#[tokio::test]
async fn mismatched_workloads_are_a_usage_error() {
    let (_d, lab) = lab();
    let b = run_baseline(&lab, &RunOptions::new("bell")).await.unwrap();
    let i = run_intercepted(&lab, &RunOptions::new("ghz(3)")).await.unwrap();
    assert!(matches!(verify_transparency(&b, &i), Err(UsageError::WorkloadMismatch { .. })));
    assert!(matches!(verify_transparency(&i, &b), Err(UsageError::WrongMode { .. })));
}

#[tokio::test]
async fn unpolled_job_becomes_partial() {
    let (_d, lab) = lab();
    let mut opts = RunOptions::new("4x bell; bell poll=false");
    opts.bound_ttl_ms = 300;
    opts.sweep_interval_ms = 50;
    let r = run_intercepted(&lab, &opts).await.unwrap();
    assert_all_pass(&r);
    let partial: Vec<_> = r.collector_snapshot.iter().filter(|s| !s.record.complete).collect();
    assert_eq!(partial.len(), 1);
    assert_eq!(partial[0].record.partial_reason, Some(PartialReason::TtlExpired));
    assert_eq!(
        r.verdicts["correlation"].detail,
        "4 COMPLETE and 1 PARTIAL(ttl_expired) records match the cloud job log"
    );
}

#[tokio::test]
async fn missing_record_is_named() {
    let (_d, lab) = lab();
    let r = run_intercepted(&lab, &RunOptions::new("3x bell")).await.unwrap();
    let mut snapshot = r.collector_snapshot.clone();
    let dropped = snapshot.remove(1);
    let v = verify_correlation(&r.cloud_job_log, &snapshot);
    assert_eq!(v.status, Status::Fail);
    let id = dropped.record.job_id.unwrap();
    assert_eq!(v.detail, format!("job {id}: no record"));

    let mut doubled = r.collector_snapshot.clone();
    let mut copy = doubled[0].clone();
    copy.store_id = 99;
    doubled.push(copy);
    assert!(verify_correlation(&r.cloud_job_log, &doubled).detail.contains("2 records"));
}

#[tokio::test]
async fn collector_outage_is_invisible_to_the_client() {
    let (_d, lab) = lab();
    let mut opts = RunOptions::new("3x bell");
    opts.collector_fault = CollectorFault::Down;
    let r = run_intercepted(&lab, &opts).await.unwrap();
    assert!(r.verdicts["jobs"].passed());
    assert!(r.collector_snapshot.is_empty());
    let obs = r.interceptor.unwrap();
    assert_eq!(obs.spool_after_run, 3);
    assert_eq!(obs.spool_file_lines_after_run, 3);
    assert_eq!(r.verdicts["correlation"].status, Status::Fail);
}

#[tokio::test]
async fn artifacts_round_trip() {
    let (dir, lab) = lab();
    let r = run_intercepted(&lab, &RunOptions::new("2x bell; deterministic(3)")).await.unwrap();
    let out = dir.path().join("saved");
    r.save(&out).unwrap();
    for f in ["scenario.json", "transcript.jsonl", "cloud_job_log.json", "collector_snapshot.json", "verdicts.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let back = ScenarioResult::load(&out).unwrap();
    assert_eq!(back.cloud_job_log, r.cloud_job_log);
    assert_eq!(back.collector_snapshot, r.collector_snapshot);
    assert_eq!(back.verdicts, r.verdicts);
    assert_eq!(back.transcript.entries, r.transcript.entries);
}
