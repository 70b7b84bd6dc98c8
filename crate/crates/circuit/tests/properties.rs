mod support;

use proptest::prelude::*;
use qspy_circuit::{fingerprint, parse_circuit, serialize_circuit, simulate, Gate};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn text_round_trip(c in support::gen::circuit()) {
        let text = serialize_circuit(&c);
        let back = parse_circuit(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(serialize_circuit(&back), text);
    }

    #[test]
    fn fingerprint_hash_is_stable(c in support::gen::circuit()) {
        let copy = qspy_circuit::Circuit::new(c.num_qubits(), c.gates().to_vec()).unwrap();
        let copy = match c.name() { Some(n) => copy.with_name(n).unwrap(), None => copy };
        let fp = fingerprint(&c);
        prop_assert_eq!(&fp.payload_hash, &fingerprint(&copy).payload_hash);
        prop_assert_eq!(fp.payload_hash, qspy_circuit::digest::sha256_hex(serialize_circuit(&copy)));
        prop_assert_eq!(fp.gate_histogram.values().sum::<usize>(), c.gates().len());
        prop_assert!(fp.depth <= c.gates().len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simulation_is_deterministic_and_conserves_shots(
        c in support::gen::circuit(),
        shots in 1u64..5000,
        seed in any::<u64>(),
    ) {
        let mut c = c;
        if c.measured_qubits().is_empty() {
            c.push(Gate::measure(0)).unwrap();
        }
        let a = simulate(&c, shots, seed).unwrap();
        let b = simulate(&c, shots, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.total(), shots);
        prop_assert!(a.is_consistent());
        prop_assert_eq!(a.width(), Some(c.measured_qubits().len()));
    }
}
