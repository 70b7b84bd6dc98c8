//! Exact statevector simulation with end-of-circuit sampling.
//!
//! Basis index bit `q` holds qubit `q`. All MEASURE gates are deferred to
//! the end of the circuit: the non-measure gates are applied in order, then
//! the joint distribution of the measured qubits is sampled `shots` times
//! with [`SplitMix64`](crate::rng::SplitMix64) seeded from `seed`.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::Circuit;
use crate::gate::{Gate, GateKind};
use crate::rng::SplitMix64;

pub const MAX_SIM_QUBITS: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimulateError {
    #[error("circuit has {0} qubits, simulator supports at most {MAX_SIM_QUBITS}")]
    TooManyQubits(usize),
    #[error("circuit contains no MEASURE gate")]
    NoMeasurement,
    #[error("shots must be at least 1")]
    ZeroShots,
}

/// Histogram of sampled outcomes.
///
/// Keys are bitstrings over the measured qubits, most significant bit
/// first, where the most significant bit is the highest measured qubit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementResult {
    pub counts: BTreeMap<String, u64>,
    pub shots: u64,
    pub seed: u64,
}

impl MeasurementResult {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Checks count conservation and key shape.
    pub fn is_consistent(&self) -> bool {
        let width = self.counts.keys().next().map(String::len);
        self.shots >= 1
            && self.total() == self.shots
            && self.counts.keys().all(|k| {
                Some(k.len()) == width && k.bytes().all(|b| b == b'0' || b == b'1')
            })
    }

    /// Number of measured bits, if any outcome was recorded.
    pub fn width(&self) -> Option<usize> {
        self.counts.keys().next().map(String::len)
    }
}

pub fn simulate(c: &Circuit, shots: u64, seed: u64) -> Result<MeasurementResult, SimulateError> {
    if c.num_qubits() > MAX_SIM_QUBITS {
        return Err(SimulateError::TooManyQubits(c.num_qubits()));
    }
    let measured = c.measured_qubits();
    if measured.is_empty() {
        return Err(SimulateError::NoMeasurement);
    }
    if shots == 0 {
        return Err(SimulateError::ZeroShots);
    }

    let state = evolve(c);
    let probs = marginal(&state, &measured);
    let counts = sample(&probs, measured.len(), shots, seed);
    Ok(MeasurementResult { counts, shots, seed })
}

/// Final amplitudes after applying every non-measure gate.
pub fn evolve(c: &Circuit) -> Vec<Complex64> {
    let mut state = vec![Complex64::new(0.0, 0.0); 1 << c.num_qubits()];
    state[0] = Complex64::new(1.0, 0.0);
    for g in c.gates() {
        apply(&mut state, g);
    }
    state
}

fn apply(state: &mut [Complex64], g: &Gate) {
    let q = g.qubits();
    match g.kind() {
        GateKind::Measure => {}
        GateKind::Cx => {
            let (c, t) = (1usize << q[0], 1usize << q[1]);
            for i in 0..state.len() {
                if i & c != 0 && i & t == 0 {
                    state.swap(i, i | t);
                }
            }
        }
        GateKind::Cz => {
            let mask = (1usize << q[0]) | (1usize << q[1]);
            for (i, amp) in state.iter_mut().enumerate() {
                if i & mask == mask {
                    *amp = -*amp;
                }
            }
        }
        kind => apply_single(state, q[0], single_qubit_matrix(kind, g.angle())),
    }
}

type Matrix2 = [[Complex64; 2]; 2];

fn single_qubit_matrix(kind: GateKind, angle: Option<f64>) -> Matrix2 {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let zero = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let half = angle.unwrap_or(0.0) / 2.0;
    let (cos, sin) = (half.cos(), half.sin());
    match kind {
        GateKind::H => {
            let h = c(FRAC_1_SQRT_2, 0.0);
            [[h, h], [h, -h]]
        }
        GateKind::X => [[zero, one], [one, zero]],
        GateKind::Y => [[zero, c(0.0, -1.0)], [c(0.0, 1.0), zero]],
        GateKind::Z => [[one, zero], [zero, -one]],
        GateKind::S => [[one, zero], [zero, c(0.0, 1.0)]],
        GateKind::T => [[one, zero], [zero, Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4)]],
        GateKind::Rx => [[c(cos, 0.0), c(0.0, -sin)], [c(0.0, -sin), c(cos, 0.0)]],
        GateKind::Ry => [[c(cos, 0.0), c(-sin, 0.0)], [c(sin, 0.0), c(cos, 0.0)]],
        GateKind::Rz => [[c(cos, -sin), zero], [zero, c(cos, sin)]],
        GateKind::Cx | GateKind::Cz | GateKind::Measure => unreachable!("not a single-qubit unitary"),
    }
}

fn apply_single(state: &mut [Complex64], qubit: usize, m: Matrix2) {
    let bit = 1usize << qubit;
    for i in 0..state.len() {
        if i & bit == 0 {
            let (a, b) = (state[i], state[i | bit]);
            state[i] = m[0][0] * a + m[0][1] * b;
            state[i | bit] = m[1][0] * a + m[1][1] * b;
        }
    }
}

/// Probability of each outcome over `measured` (ascending qubit order; bit
/// `k` of the outcome index is `measured[k]`).
pub fn marginal(state: &[Complex64], measured: &[usize]) -> Vec<f64> {
    let mut probs = vec![0.0; 1 << measured.len()];
    for (i, amp) in state.iter().enumerate() {
        let outcome = measured
            .iter()
            .enumerate()
            .fold(0usize, |acc, (k, &q)| acc | (((i >> q) & 1) << k));
        probs[outcome] += amp.norm_sqr();
    }
    probs
}

fn sample(probs: &[f64], width: usize, shots: u64, seed: u64) -> BTreeMap<String, u64> {
    let mut cumulative = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in probs {
        acc += p;
        cumulative.push(acc);
    }
    let total = acc;
    let mut rng = SplitMix64::new(seed);
    let mut hits = vec![0u64; probs.len()];
    for _ in 0..shots {
        let u = rng.next_f64() * total;
        let mut idx = cumulative.partition_point(|&c| c <= u);
        // Floating-point slack can push `u` past the last bucket, or land
        // in a zero-probability bucket at the boundary.
        idx = idx.min(probs.len() - 1);
        while probs[idx] == 0.0 && idx > 0 {
            idx -= 1;
        }
        hits[idx] += 1;
    }
    hits.into_iter()
        .enumerate()
        .filter(|(_, n)| *n > 0)
        .map(|(outcome, n)| (format!("{outcome:0width$b}"), n))
        .collect()
}
