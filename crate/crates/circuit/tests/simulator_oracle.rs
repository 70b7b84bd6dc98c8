mod support;

use qspy_circuit::{simulate, Circuit, Gate};
use support::dense_oracle::{distribution, enumerate_hxcx, total_variation};

#[test]
fn oracle_sanity() {
    let bell = Circuit::new(2, vec![Gate::h(0), Gate::cx(0, 1), Gate::measure(0), Gate::measure(1)]).unwrap();
    let d = distribution(&bell);
    assert!((d["00"] - 0.5).abs() < 1e-12 && (d["11"] - 0.5).abs() < 1e-12);
    assert!(d.get("01").copied().unwrap_or(0.0) < 1e-12);
    assert_eq!(enumerate_hxcx(1, 2).len(), 1 + 2 + 4);
    assert_eq!(enumerate_hxcx(2, 1).len(), 1 + 6);
}

#[test]
fn two_qubit_circuits_match_dense_oracle() {
    for (i, c) in enumerate_hxcx(2, 3).iter().enumerate() {
        let r = simulate(c, 20_000, i as u64).unwrap();
        let tv = total_variation(&r.counts, r.shots, &distribution(c));
        assert!(tv <= 0.02, "circuit #{i} tv={tv}");
    }
}

#[test]
fn ghz_chain_matches_dense_oracle() {
    let c = Circuit::new(
        3,
        vec![Gate::h(0), Gate::cx(0, 1), Gate::cx(1, 2), Gate::measure(0), Gate::measure(1), Gate::measure(2)],
    )
    .unwrap();
    let exact = distribution(&c);
    assert_eq!(exact.len(), 8);
    let r = simulate(&c, 50_000, 11).unwrap();
    assert_eq!(r.counts.keys().collect::<Vec<_>>(), vec!["000", "111"]);
    assert!(total_variation(&r.counts, r.shots, &exact) <= 0.02);
}
