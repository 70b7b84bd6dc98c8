#[path = "support/table_model.rs"]
mod table_model;

use proptest::prelude::*;
use qspy_interceptor::table::TableConfig;
use table_model::{op, run, Op};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn short_ttls_keep_invariants(ops in prop::collection::vec(op(), 1..120)) {
        run(TableConfig { pending_ttl_ms: 60, bound_ttl_ms: 150 }, &ops)?;
    }

    #[test]
    fn each_job_is_exported_at_most_once(ops in prop::collection::vec(op(), 1..120)) {
        run(TableConfig { pending_ttl_ms: 60, bound_ttl_ms: u64::MAX / 2 }, &ops)?;
    }

    #[test]
    fn sweeping_past_ttl_drains_the_table(ops in prop::collection::vec(op(), 1..80)) {
        let cfg = TableConfig { pending_ttl_ms: 60, bound_ttl_ms: 150 };
        let mut ops = ops;
        ops.push(Op::Tick(151));
        ops.push(Op::Sweep);
        let out = run(cfg, &ops)?;
        prop_assert_eq!(out.remaining, 0);
    }
}

#[test]
fn drained_after_ttl() {
    let cfg = TableConfig { pending_ttl_ms: 60, bound_ttl_ms: 150 };
    let ops = vec![
        Op::Capture { garbage: false },
        Op::Capture { garbage: true },
        Op::Bind { flow: 0, status: 200, job: Some(1) },
        Op::Tick(151),
        Op::Sweep,
    ];
    let out = run(cfg, &ops).unwrap();
    assert_eq!(out.exported.len(), 2);
    assert_eq!(out.remaining, 0);
}
