#![allow(dead_code)]

use proptest::prelude::*;
use qspy_circuit::{Circuit, Gate, GateKind};

/// Finite angles including awkward magnitudes.
fn angle() -> impl Strategy<Value = f64> {
    prop_oneof![
        -10.0f64..10.0,
        any::<f64>().prop_filter("finite", |a| a.is_finite()),
        Just(0.0),
        Just(-0.0),
        Just(std::f64::consts::PI),
    ]
}

fn gate(n: usize) -> impl Strategy<Value = Gate> {
    let kinds = prop::sample::select(GateKind::ALL.to_vec());
    (kinds, 0..n, 0..n, angle()).prop_filter_map("two-qubit gate needs distinct qubits", move |(k, a, b, theta)| {
        match k.arity() {
            2 if a == b => None,
            2 => Gate::new(k, vec![a, b], None).ok(),
            _ if k.is_rotation() => Gate::new(k, vec![a], Some(theta)).ok(),
            _ => Gate::new(k, vec![a], None).ok(),
        }
    })
}

pub fn circuit() -> impl Strategy<Value = Circuit> {
    (1usize..=12).prop_flat_map(|n| {
        (
            prop::collection::vec(gate(n), 0..40),
            prop::option::of("[a-z][a-z0-9 _-]{0,10}[a-z0-9]"),
        )
            .prop_map(move |(gates, name)| {
                let c = Circuit::new(n, gates).unwrap();
                match name {
                    Some(label) => c.with_name(label).unwrap(),
                    None => c,
                }
            })
    })
}
