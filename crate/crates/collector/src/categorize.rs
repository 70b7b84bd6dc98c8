//! Circuit taxonomy. Rules are tried in priority order; the first match wins.

use std::fmt;
use std::str::FromStr;

use qspy_circuit::{Circuit, Fingerprint, GateKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    BellLike,
    GhzLike,
    Parameterized,
    Deterministic,
    Unknown,
}

impl Label {
    pub const ALL: [Label; 5] = [
        Label::BellLike,
        Label::GhzLike,
        Label::Parameterized,
        Label::Deterministic,
        Label::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::BellLike => "BELL_LIKE",
            Label::GhzLike => "GHZ_LIKE",
            Label::Parameterized => "PARAMETERIZED",
            Label::Deterministic => "DETERMINISTIC",
            Label::Unknown => "UNKNOWN",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub label: Label,
    pub evidence: String,
}

impl Category {
    fn new(label: Label, evidence: impl Into<String>) -> Self {
        Self {
            label,
            evidence: evidence.into(),
        }
    }
}

/// Classifies a circuit. Pure: depends only on the gate list and the
/// fingerprint.
pub fn categorize(c: &Circuit, fp: &Fingerprint) -> Category {
    let n = c.num_qubits();
    if n == 2 && entangling_prefix(c) {
        return Category::new(Label::BellLike, "h, cx, then measurements on 2 qubits");
    }
    if n >= 3 && entangling_prefix(c) {
        return Category::new(Label::GhzLike, format!("h and a {}-cx chain over {n} qubits, then measurements", n - 1));
    }
    let rotations: usize = ["rx", "ry", "rz"].iter().filter_map(|k| fp.gate_histogram.get(*k)).sum();
    if rotations > 0 {
        return Category::new(Label::Parameterized, format!("{rotations} rotation gate(s)"));
    }
    if fp.gate_histogram.keys().all(|k| k == "x" || k == "measure") {
        return Category::new(Label::Deterministic, "only x and measure gates");
    }
    let kinds: Vec<&str> = fp.gate_histogram.keys().map(String::as_str).collect();
    Category::new(Label::Unknown, format!("gates {{{}}} match no rule", kinds.join(", ")))
}

/// `h(r)`, then `n - 1` CX gates each reaching one new qubit from the
/// already-entangled set, then at least one measurement and nothing else.
fn entangling_prefix(c: &Circuit) -> bool {
    let n = c.num_qubits();
    let gates = c.gates();
    if gates.len() < n + 1 {
        return false;
    }
    let (head, tail) = gates.split_at(n);
    if head[0].kind() != GateKind::H {
        return false;
    }
    let mut reached = vec![false; n];
    reached[head[0].qubits()[0]] = true;
    for g in &head[1..] {
        let &[ctl, tgt] = g.qubits() else { return false };
        if g.kind() != GateKind::Cx || !reached[ctl] || reached[tgt] {
            return false;
        }
        reached[tgt] = true;
    }
    tail.iter().all(|g| g.kind() == GateKind::Measure)
}
