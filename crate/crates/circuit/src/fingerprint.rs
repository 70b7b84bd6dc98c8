use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::digest::sha256_hex;
use crate::text::serialize_circuit;

/// Structural summary of a circuit used for categorization and lookup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub num_qubits: usize,
    /// As-soon-as-possible layer count, MEASURE gates included.
    pub depth: usize,
    pub gate_histogram: BTreeMap<String, usize>,
    /// SHA-256 of the canonical text encoding.
    pub payload_hash: String,
}

pub fn fingerprint(c: &Circuit) -> Fingerprint {
    let mut frontier = vec![0usize; c.num_qubits()];
    let mut depth = 0;
    let mut gate_histogram = BTreeMap::new();
    for g in c.gates() {
        let layer = 1 + g.qubits().iter().map(|&q| frontier[q]).max().unwrap_or(0);
        for &q in g.qubits() {
            frontier[q] = layer;
        }
        depth = depth.max(layer);
        *gate_histogram.entry(g.kind().mnemonic().to_string()).or_insert(0) += 1;
    }
    Fingerprint {
        num_qubits: c.num_qubits(),
        depth,
        gate_histogram,
        payload_hash: sha256_hex(serialize_circuit(c)),
    }
}
