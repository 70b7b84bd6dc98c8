use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::Circuit;
use crate::text::{parse_circuit, serialize_circuit, ParseError};

/// A job submission: the circuit plus execution parameters.
///
/// On the wire this is a JSON object whose `circuit` field carries the text
/// encoding:
///
/// ```json
/// {"circuit": "qubits 1\nx 0\nmeasure 0", "shots": 100,
///  "backend_name": "sim", "metadata": {"user": "alice"}}
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct JobPayload {
    pub circuit: Circuit,
    pub shots: u64,
    pub backend_name: String,
    pub client_metadata: BTreeMap<String, String>,
}

#[derive(Debug, Error)]
pub enum PayloadError {
    #[error("malformed job body: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Circuit(#[from] ParseError),
    #[error("shots must be at least 1")]
    ZeroShots,
}

impl PayloadError {
    /// True when the body was well-formed but describes an invalid job.
    pub fn is_validation(&self) -> bool {
        match self {
            PayloadError::Json(_) => false,
            PayloadError::Circuit(e) => e.is_validation(),
            PayloadError::ZeroShots => true,
        }
    }
}

/// JSON body of a submission, with the circuit still in text form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobPayloadWire {
    pub circuit: String,
    pub shots: u64,
    pub backend_name: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl JobPayload {
    pub fn new(circuit: Circuit, shots: u64, backend_name: impl Into<String>) -> Self {
        Self {
            circuit,
            shots,
            backend_name: backend_name.into(),
            client_metadata: BTreeMap::new(),
        }
    }

    pub fn to_wire(&self) -> JobPayloadWire {
        JobPayloadWire {
            circuit: serialize_circuit(&self.circuit),
            shots: self.shots,
            backend_name: self.backend_name.clone(),
            metadata: self.client_metadata.clone(),
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(&self.to_wire()).expect("payload serializes")
    }

    pub fn from_wire(wire: JobPayloadWire) -> Result<Self, PayloadError> {
        if wire.shots == 0 {
            return Err(PayloadError::ZeroShots);
        }
        Ok(Self {
            circuit: parse_circuit(&wire.circuit)?,
            shots: wire.shots,
            backend_name: wire.backend_name,
            client_metadata: wire.metadata,
        })
    }

    pub fn from_json(body: &[u8]) -> Result<Self, PayloadError> {
        Self::from_wire(serde_json::from_slice(body)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gate::Gate;

    #[test]
    fn json_round_trip() {
        let mut p = JobPayload::new(
            Circuit::new(1, vec![Gate::x(0), Gate::measure(0)]).unwrap(),
            100,
            "sim",
        );
        p.client_metadata.insert("user".into(), "alice".into());
        let body = p.to_json();
        let text = String::from_utf8(body.clone()).unwrap();
        assert!(text.contains(r#""circuit":"qubits 1\nx 0\nmeasure 0""#), "{text}");
        assert_eq!(JobPayload::from_json(&body).unwrap(), p);
    }

    #[test]
    fn error_classes() {
        let err = JobPayload::from_json(b"not json").unwrap_err();
        assert!(!err.is_validation());
        let err = JobPayload::from_json(br#"{"circuit":"qubits 2\ncx 0 5","shots":1,"backend_name":"s"}"#)
            .unwrap_err();
        assert!(err.is_validation());
        let err = JobPayload::from_json(br#"{"circuit":"qubits 2\nfoo 0","shots":1,"backend_name":"s"}"#)
            .unwrap_err();
        assert!(!err.is_validation());
        let err = JobPayload::from_json(br#"{"circuit":"qubits 1","shots":0,"backend_name":"s"}"#)
            .unwrap_err();
        assert!(matches!(err, PayloadError::ZeroShots));
    }

    #[test]
    fn metadata_defaults_to_empty() {
        let p = JobPayload::from_json(br#"{"circuit":"qubits 1","shots":3,"backend_name":"s"}"#).unwrap();
        assert!(p.client_metadata.is_empty());
    }
}
