use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gate::{Gate, GateKind};

/// Upper bound on the qubit count a circuit may declare. The simulator has
/// its own, much smaller, limit ([`crate::MAX_SIM_QUBITS`]); circuits above
/// that limit are still representable so that a backend can reject them at
/// execution time.
pub const MAX_DECLARED_QUBITS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("circuit must declare at least one qubit")]
    NoQubits,
    #[error("circuit declares {0} qubits, limit is {MAX_DECLARED_QUBITS}")]
    TooManyQubits(usize),
    #[error("gate {gate} takes {expected} qubit(s), got {got}")]
    Arity {
        gate: GateKind,
        expected: usize,
        got: usize,
    },
    #[error("gate {gate} names qubit {qubit} twice")]
    DuplicateQubit { gate: GateKind, qubit: usize },
    #[error("gate {0} requires an angle")]
    MissingAngle(GateKind),
    #[error("gate {0} does not take an angle")]
    UnexpectedAngle(GateKind),
    #[error("gate {0} has a non-finite angle")]
    NonFiniteAngle(GateKind),
    #[error("gate {gate} acts on qubit {qubit} but the circuit has {num_qubits} qubit(s)")]
    QubitOutOfRange {
        gate: GateKind,
        qubit: usize,
        num_qubits: usize,
    },
    #[error("invalid circuit name: {0}")]
    BadName(String),
}

/// A validated gate-list circuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCircuit", into = "RawCircuit")]
pub struct Circuit {
    num_qubits: usize,
    gates: Vec<Gate>,
    name: Option<String>,
}

impl Circuit {
    pub fn new(num_qubits: usize, gates: Vec<Gate>) -> Result<Self, ValidationError> {
        check_width(num_qubits)?;
        for g in &gates {
            check_gate(g, num_qubits)?;
        }
        Ok(Self {
            num_qubits,
            gates,
            name: None,
        })
    }

    /// An empty circuit over `num_qubits` qubits.
    pub fn empty(num_qubits: usize) -> Result<Self, ValidationError> {
        Self::new(num_qubits, Vec::new())
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Result<Self, ValidationError> {
        let name = name.into();
        check_name(&name)?;
        self.name = Some(name);
        Ok(self)
    }

    pub fn push(&mut self, gate: Gate) -> Result<(), ValidationError> {
        check_gate(&gate, self.num_qubits)?;
        self.gates.push(gate);
        Ok(())
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    /// Sorted, de-duplicated set of qubits that carry a MEASURE gate.
    pub fn measured_qubits(&self) -> Vec<usize> {
        let mut qs: Vec<usize> = self
            .gates
            .iter()
            .filter(|g| g.kind() == GateKind::Measure)
            .map(|g| g.qubits()[0])
            .collect();
        qs.sort_unstable();
        qs.dedup();
        qs
    }
}

fn check_width(num_qubits: usize) -> Result<(), ValidationError> {
    if num_qubits == 0 {
        return Err(ValidationError::NoQubits);
    }
    if num_qubits > MAX_DECLARED_QUBITS {
        return Err(ValidationError::TooManyQubits(num_qubits));
    }
    Ok(())
}

fn check_gate(g: &Gate, num_qubits: usize) -> Result<(), ValidationError> {
    match g.qubits().iter().find(|&&q| q >= num_qubits) {
        Some(&qubit) => Err(ValidationError::QubitOutOfRange {
            gate: g.kind(),
            qubit,
            num_qubits,
        }),
        None => Ok(()),
    }
}

pub(crate) fn check_name(name: &str) -> Result<(), ValidationError> {
    if name.is_empty() {
        return Err(ValidationError::BadName("empty".into()));
    }
    if name.trim() != name {
        return Err(ValidationError::BadName("leading or trailing whitespace".into()));
    }
    if name.chars().any(char::is_control) {
        return Err(ValidationError::BadName("control character".into()));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct RawCircuit {
    num_qubits: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    gates: Vec<Gate>,
}

impl TryFrom<RawCircuit> for Circuit {
    type Error = ValidationError;

    fn try_from(raw: RawCircuit) -> Result<Self, Self::Error> {
        let c = Circuit::new(raw.num_qubits, raw.gates)?;
        match raw.name {
            Some(n) => c.with_name(n),
            None => Ok(c),
        }
    }
}

impl From<Circuit> for RawCircuit {
    fn from(c: Circuit) -> Self {
        RawCircuit {
            num_qubits: c.num_qubits,
            name: c.name,
            gates: c.gates,
        }
    }
}
