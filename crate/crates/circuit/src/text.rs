//! Line-oriented text encoding of circuits.
//!
//! ```text
//! qubits 2
//! name bell
//! h 0
//! cx 0 1
//! rz 1 0.29999999999999999
//! measure 0
//! measure 1
//! ```
//!
//! The first non-blank line is the `qubits N` header. An optional
//! `name <label>` line may follow. Every other line is one gate: the
//! mnemonic, the qubit indices and, for `rx`/`ry`/`rz`, the angle in
//! radians. Blank lines and lines starting with `#` are ignored when
//! parsing. Gate mnemonics are accepted in any case.
//!
//! [`serialize_circuit`] produces the canonical form: lowercase mnemonics,
//! single spaces, `\n` separators with no trailing newline, and angles in
//! shortest `%.17g` notation so that every `f64` survives a round trip.

use thiserror::Error;

use crate::circuit::{check_name, Circuit, ValidationError};
use crate::gate::{Gate, GateKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error on line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid circuit (line {line}): {error}")]
    Validation { line: usize, error: ValidationError },
}

impl ParseError {
    fn syntax(line: usize, message: impl Into<String>) -> Self {
        ParseError::Syntax {
            line,
            message: message.into(),
        }
    }

    pub fn is_validation(&self) -> bool {
        matches!(self, ParseError::Validation { .. })
    }
}

pub fn parse_circuit(text: &str) -> Result<Circuit, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (header_line, header) = lines
        .next()
        .ok_or_else(|| ParseError::syntax(1, "missing `qubits N` header"))?;
    let num_qubits = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["qubits", n] => n
            .parse::<usize>()
            .map_err(|_| ParseError::syntax(header_line, format!("bad qubit count `{n}`")))?,
        _ => return Err(ParseError::syntax(header_line, "expected `qubits N` header")),
    };
    let mut circuit = Circuit::empty(num_qubits).map_err(|error| ParseError::Validation {
        line: header_line,
        error,
    })?;

    let mut name = None;
    for (line, content) in lines {
        if let Some(rest) = content.strip_prefix("name ") {
            if name.is_some() {
                return Err(ParseError::syntax(line, "duplicate `name` line"));
            }
            let label = rest.trim().to_string();
            check_name(&label).map_err(|error| ParseError::Validation { line, error })?;
            name = Some(label);
            continue;
        }
        let gate = parse_gate(line, content)?;
        circuit
            .push(gate)
            .map_err(|error| ParseError::Validation { line, error })?;
    }
    match name {
        Some(n) => circuit.with_name(n).map_err(|error| ParseError::Validation {
            line: header_line,
            error,
        }),
        None => Ok(circuit),
    }
}

fn parse_gate(line: usize, content: &str) -> Result<Gate, ParseError> {
    let mut tokens = content.split_whitespace();
    let mnemonic = tokens.next().expect("non-empty line");
    let kind: GateKind = mnemonic
        .parse()
        .map_err(|m: String| ParseError::syntax(line, m))?;
    let mut args: Vec<&str> = tokens.collect();

    let angle = if kind.is_rotation() && args.len() >= 2 {
        let raw = args.pop().expect("len checked");
        let value: f64 = raw
            .parse()
            .map_err(|_| ParseError::syntax(line, format!("bad angle `{raw}`")))?;
        Some(value)
    } else {
        None
    };
    let qubits = args
        .iter()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| ParseError::syntax(line, format!("bad qubit index `{t}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Gate::new(kind, qubits, angle).map_err(|error| ParseError::Validation { line, error })
}

pub fn serialize_circuit(c: &Circuit) -> String {
    let mut out = format!("qubits {}", c.num_qubits());
    if let Some(name) = c.name() {
        out.push_str("\nname ");
        out.push_str(name);
    }
    for g in c.gates() {
        out.push('\n');
        out.push_str(g.kind().mnemonic());
        for q in g.qubits() {
            out.push(' ');
            out.push_str(&q.to_string());
        }
        if let Some(a) = g.angle() {
            out.push(' ');
            out.push_str(&format_g17(a));
        }
    }
    out
}

/// Formats `x` like C's `printf("%.17g", x)`.
pub fn format_g17(x: f64) -> String {
    const PRECISION: i32 = 17;
    if x == 0.0 {
        return if x.is_sign_negative() { "-0" } else { "0" }.to_string();
    }
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();

    if !(-4..PRECISION).contains(&exp) {
        let (head, tail) = digits.split_at(1);
        let tail = tail.trim_end_matches('0');
        let exp_sign = if exp < 0 { '-' } else { '+' };
        let mut s = format!("{sign}{head}");
        if !tail.is_empty() {
            s.push('.');
            s.push_str(tail);
        }
        s.push_str(&format!("e{exp_sign}{:02}", exp.abs()));
        return s;
    }

    let body = if exp >= 0 {
        let split = (exp + 1) as usize;
        let (int, frac) = digits.split_at(split);
        let frac = frac.trim_end_matches('0');
        if frac.is_empty() {
            int.to_string()
        } else {
            format!("{int}.{frac}")
        }
    } else {
        let zeros = "0".repeat((-exp - 1) as usize);
        format!("0.{zeros}{}", digits.trim_end_matches('0'))
    };
    format!("{sign}{body}")
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    #[test]
    fn parses_bell_program() {
        let c = parse_circuit("qubits 2\nh 0\ncx 0 1\nmeasure 0\nmeasure 1").unwrap();
        assert_eq!(c.num_qubits(), 2);
        assert_eq!(
            c.gates(),
            &[Gate::h(0), Gate::cx(0, 1), Gate::measure(0), Gate::measure(1)]
        );
        assert_eq!(c.name(), None);
    }

    #[test]
    fn parses_empty_program() {
        let c = parse_circuit("qubits 1\n").unwrap();
        assert_eq!(c, Circuit::empty(1).unwrap());
    }

    #[test]
    fn out_of_range_is_validation_error() {
        let err = parse_circuit("qubits 2\ncx 0 5").unwrap_err();
        assert!(err.is_validation(), "{err}");
        assert!(matches!(
            err,
            ParseError::Validation {
                line: 2,
                error: ValidationError::QubitOutOfRange { qubit: 5, .. }
            }
        ));
    }

    #[test]
    fn arity_is_validation_error() {
        assert!(parse_circuit("qubits 2\ncx 0").unwrap_err().is_validation());
        assert!(parse_circuit("qubits 2\nh 0 1").unwrap_err().is_validation());
        assert!(parse_circuit("qubits 2\nrz 0").unwrap_err().is_validation());
        assert!(parse_circuit("qubits 2\ncx 1 1").unwrap_err().is_validation());
    }

    #[test]
    fn syntax_errors() {
        for bad in [
            "",
            "h 0",
            "qubits",
            "qubits two",
            "qubits 2\nccx 0 1",
            "qubits 2\nh a",
            "qubits 2\nrz 0 pi",
            "qubits 2\nname a\nname b",
        ] {
            let err = parse_circuit(bad).unwrap_err();
            assert!(matches!(err, ParseError::Syntax { .. }), "{bad:?} -> {err}");
        }
        assert!(matches!(
            parse_circuit("qubits 0"),
            Err(ParseError::Validation {
                error: ValidationError::NoQubits,
                ..
            })
        ));
        assert!(matches!(
            parse_circuit("qubits 1\nrx 0 inf"),
            Err(ParseError::Validation {
                error: ValidationError::NonFiniteAngle(_),
                ..
            })
        ));
    }

    #[test]
    fn lenient_input() {
        let c = parse_circuit("# comment\n\n  qubits 2 \r\nH 0\r\n\n  CX   0  1\n").unwrap();
        assert_eq!(c.gates(), &[Gate::h(0), Gate::cx(0, 1)]);
    }

    #[test]
    fn canonical_single_gate() {
        let c = Circuit::new(1, vec![Gate::x(0)]).unwrap();
        assert_eq!(serialize_circuit(&c), "qubits 1\nx 0");
    }

    #[test]
    fn canonical_angle_format() {
        let c = Circuit::new(2, vec![Gate::rz(0, PI)]).unwrap();
        assert_eq!(serialize_circuit(&c), "qubits 2\nrz 0 3.1415926535897931");
    }

    #[test]
    fn canonical_name_line() {
        let c = parse_circuit("qubits 1\nx 0\nname  flip ").unwrap();
        assert_eq!(c.name(), Some("flip"));
        assert_eq!(serialize_circuit(&c), "qubits 1\nname flip\nx 0");
    }

    #[test]
    fn g17_matches_printf() {
        // Reference strings produced by C printf("%.17g").
        let cases = [
            (PI, "3.1415926535897931"),
            (0.3, "0.29999999999999999"),
            (0.5, "0.5"),
            (1.0, "1"),
            (-2.0, "-2"),
            (100.0, "100"),
            (1e-5, "1.0000000000000001e-05"),
            (0.0001, "0.0001"),
            (1e17, "1e+17"),
            (1e16, "10000000000000000"),
            (-1.5e-7, "-1.4999999999999999e-07"),
            (123456.789, "123456.789"),
            (0.0, "0"),
            (-0.0, "-0"),
        ];
        for (x, want) in cases {
            assert_eq!(format_g17(x), want, "formatting {x:e}");
            assert_eq!(want.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
