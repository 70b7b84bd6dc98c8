//! Circuit model shared by every component of the testbed.
//!
//! A [`Circuit`] is a flat list of [`Gate`]s over at most a few dozen qubits.
//! Circuits travel on the wire in a line-oriented text form (see [`text`]),
//! are executed by the statevector simulator in [`sim`], and are summarized
//! for analysis by [`fingerprint()`].

mod circuit;
pub mod digest;
mod fingerprint;
mod gate;
mod payload;
pub mod rng;
pub mod sim;
pub mod text;

pub use circuit::{Circuit, ValidationError, MAX_DECLARED_QUBITS};
pub use fingerprint::{fingerprint, Fingerprint};
pub use gate::{Gate, GateKind};
pub use payload::{JobPayload, JobPayloadWire, PayloadError};
pub use sim::{simulate, MeasurementResult, SimulateError, MAX_SIM_QUBITS};
pub use text::{parse_circuit, serialize_circuit, ParseError};
