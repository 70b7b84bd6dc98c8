//! Independent reference for the simulator: builds the full 2^n x 2^n
//! matrix of each gate from Kronecker products and multiplies them out.
//! Only the real gates H, X and CX are supported.

#![allow(dead_code)]

use std::collections::BTreeMap;

use qspy_circuit::{Circuit, GateKind};

type Mat = Vec<Vec<f64>>;

fn identity(d: usize) -> Mat {
    (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ra, rb) = (a.len(), b.len());
    let mut out = vec![vec![0.0; ra * rb]; ra * rb];
    for i in 0..ra {
        for j in 0..ra {
            for k in 0..rb {
                for l in 0..rb {
                    out[i * rb + k][j * rb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect()).collect()
}

fn mat_vec(m: &Mat, v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// Tensor product over all qubits, highest qubit leftmost, so that basis
/// index bit q is qubit q.
fn embed(n: usize, ops: &BTreeMap<usize, Mat>) -> Mat {
    let mut m = vec![vec![1.0]];
    for q in (0..n).rev() {
        let op = ops.get(&q).cloned().unwrap_or_else(|| identity(2));
        m = kron(&m, &op);
    }
    m
}

fn gate_matrix(n: usize, kind: GateKind, qubits: &[usize]) -> Mat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let h = vec![vec![s, s], vec![s, -s]];
    let x = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    let p0 = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
    let p1 = vec![vec![0.0, 0.0], vec![0.0, 1.0]];
    match kind {
        GateKind::H => embed(n, &BTreeMap::from([(qubits[0], h)])),
        GateKind::X => embed(n, &BTreeMap::from([(qubits[0], x)])),
        GateKind::Cx => {
            let off = embed(n, &BTreeMap::from([(qubits[0], p0)]));
            let on = embed(n, &BTreeMap::from([(qubits[0], p1), (qubits[1], x)]));
            add(&off, &on)
        }
        GateKind::Measure => identity(1 << n),
        other => panic!("dense oracle does not model {other}"),
    }
}

/// Exact outcome distribution keyed like `MeasurementResult::counts`.
pub fn distribution(c: &Circuit) -> BTreeMap<String, f64> {
    let n = c.num_qubits();
    let mut state = vec![0.0; 1 << n];
    state[0] = 1.0;
    for g in c.gates() {
        state = mat_vec(&gate_matrix(n, g.kind(), g.qubits()), &state);
    }
    let measured = c.measured_qubits();
    let mut dist = BTreeMap::new();
    for (i, amp) in state.iter().enumerate() {
        let key: String = measured
            .iter()
            .rev()
            .map(|&q| if (i >> q) & 1 == 1 { '1' } else { '0' })
            .collect();
        *dist.entry(key).or_insert(0.0) += amp * amp;
    }
    dist
}

pub fn total_variation(counts: &BTreeMap<String, u64>, shots: u64, exact: &BTreeMap<String, f64>) -> f64 {
    let mut keys: Vec<&String> = counts.keys().chain(exact.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| {
            let p = exact.get(k).copied().unwrap_or(0.0);
            let q = counts.get(k).copied().unwrap_or(0) as f64 / shots as f64;
            (p - q).abs()
        })
        .sum::<f64>()
}

/// Every circuit over `n` qubits with at most `max_gates` gates drawn from
/// {H, X, CX}, each followed by a measurement of every qubit.
pub fn enumerate_hxcx(n: usize, max_gates: usize) -> Vec<Circuit> {
    use qspy_circuit::Gate;
    let mut alphabet = Vec::new();
    for q in 0..n {
        alphabet.push(Gate::h(q));
        alphabet.push(Gate::x(q));
    }
    for c in 0..n {
        for t in 0..n {
            if c != t {
                alphabet.push(Gate::cx(c, t));
            }
        }
    }
    let mut prefixes: Vec<Vec<Gate>> = vec![Vec::new()];
    let mut all = Vec::new();
    for len in 0..=max_gates {
        if len > 0 {
            prefixes = prefixes
                .iter()
                .flat_map(|p| {
                    alphabet.iter().map(move |g| {
                        let mut next = p.clone();
                        next.push(g.clone());
                        next
                    })
                })
                .collect();
        }
        for p in &prefixes {
            let mut gates = p.clone();
            gates.extend((0..n).map(Gate::measure));
            all.push(Circuit::new(n, gates).unwrap());
        }
    }
    all
}
