use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::circuit::ValidationError;

/// The supported gate set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    H,
    X,
    Y,
    Z,
    S,
    T,
    Rx,
    Ry,
    Rz,
    Cx,
    Cz,
    Measure,
}

impl GateKind {
    pub const ALL: [GateKind; 12] = [
        GateKind::H,
        GateKind::X,
        GateKind::Y,
        GateKind::Z,
        GateKind::S,
        GateKind::T,
        GateKind::Rx,
        GateKind::Ry,
        GateKind::Rz,
        GateKind::Cx,
        GateKind::Cz,
        GateKind::Measure,
    ];

    /// Canonical lowercase mnemonic used by the text encoding.
    pub fn mnemonic(self) -> &'static str {
        match self {
            GateKind::H => "h",
            GateKind::X => "x",
            GateKind::Y => "y",
            GateKind::Z => "z",
            GateKind::S => "s",
            GateKind::T => "t",
            GateKind::Rx => "rx",
            GateKind::Ry => "ry",
            GateKind::Rz => "rz",
            GateKind::Cx => "cx",
            GateKind::Cz => "cz",
            GateKind::Measure => "measure",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            GateKind::Cx | GateKind::Cz => 2,
            _ => 1,
        }
    }

    pub fn is_rotation(self) -> bool {
        matches!(self, GateKind::Rx | GateKind::Ry | GateKind::Rz)
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

impl FromStr for GateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        GateKind::ALL
            .into_iter()
            .find(|k| k.mnemonic() == lower)
            .ok_or_else(|| format!("unknown gate `{s}`"))
    }
}

/// One gate application. Fields are private so that every `Gate` in
/// existence satisfies the arity and angle rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGate", into = "RawGate")]
pub struct Gate {
    kind: GateKind,
    qubits: Vec<usize>,
    angle: Option<f64>,
}

impl Gate {
    pub fn new(kind: GateKind, qubits: Vec<usize>, angle: Option<f64>) -> Result<Self, ValidationError> {
        if qubits.len() != kind.arity() {
            return Err(ValidationError::Arity {
                gate: kind,
                expected: kind.arity(),
                got: qubits.len(),
            });
        }
        if qubits.len() == 2 && qubits[0] == qubits[1] {
            return Err(ValidationError::DuplicateQubit {
                gate: kind,
                qubit: qubits[0],
            });
        }
        match (kind.is_rotation(), angle) {
            (true, None) => return Err(ValidationError::MissingAngle(kind)),
            (false, Some(_)) => return Err(ValidationError::UnexpectedAngle(kind)),
            (true, Some(a)) if !a.is_finite() => return Err(ValidationError::NonFiniteAngle(kind)),
            _ => {}
        }
        Ok(Self { kind, qubits, angle })
    }

    fn single(kind: GateKind, q: usize) -> Self {
        Self { kind, qubits: vec![q], angle: None }
    }

    pub fn h(q: usize) -> Self {
        Self::single(GateKind::H, q)
    }
    pub fn x(q: usize) -> Self {
        Self::single(GateKind::X, q)
    }
    pub fn y(q: usize) -> Self {
        Self::single(GateKind::Y, q)
    }
    pub fn z(q: usize) -> Self {
        Self::single(GateKind::Z, q)
    }
    pub fn s(q: usize) -> Self {
        Self::single(GateKind::S, q)
    }
    pub fn t(q: usize) -> Self {
        Self::single(GateKind::T, q)
    }
    pub fn measure(q: usize) -> Self {
        Self::single(GateKind::Measure, q)
    }

    /// Panics if `theta` is not finite.
    pub fn rx(q: usize, theta: f64) -> Self {
        Self::new(GateKind::Rx, vec![q], Some(theta)).expect("finite angle")
    }
    /// Panics if `theta` is not finite.
    pub fn ry(q: usize, theta: f64) -> Self {
        Self::new(GateKind::Ry, vec![q], Some(theta)).expect("finite angle")
    }
    /// Panics if `theta` is not finite.
    pub fn rz(q: usize, theta: f64) -> Self {
        Self::new(GateKind::Rz, vec![q], Some(theta)).expect("finite angle")
    }

    /// Panics if `control == target`.
    pub fn cx(control: usize, target: usize) -> Self {
        Self::new(GateKind::Cx, vec![control, target], None).expect("distinct qubits")
    }
    /// Panics if `a == b`.
    pub fn cz(a: usize, b: usize) -> Self {
        Self::new(GateKind::Cz, vec![a, b], None).expect("distinct qubits")
    }

    pub fn kind(&self) -> GateKind {
        self.kind
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits
    }

    pub fn angle(&self) -> Option<f64> {
        self.angle
    }
}

#[derive(Serialize, Deserialize)]
struct RawGate {
    gate: GateKind,
    qubits: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    angle: Option<f64>,
}

impl TryFrom<RawGate> for Gate {
    type Error = ValidationError;

    fn try_from(raw: RawGate) -> Result<Self, Self::Error> {
        Gate::new(raw.gate, raw.qubits, raw.angle)
    }
}

impl From<Gate> for RawGate {
    fn from(g: Gate) -> Self {
        RawGate {
            gate: g.kind,
            qubits: g.qubits,
            angle: g.angle,
        }
    }
}
