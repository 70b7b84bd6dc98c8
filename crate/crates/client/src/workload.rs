//! Workload descriptions.
//!
//! A workload is a list of items separated by `;` or newlines:
//!
//! ```text
//! [<N>x] <template> [shots=<N>] [backend=<name>] [poll=true|false]
//! ```
//!
//! Templates: `bell`, `ghz(n)`, `random(n, gates, seed)` and
//! `deterministic(n)`. `5x random(3, 6, 42)` expands to five circuits
//! seeded 42..=46.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;

use qspy_circuit::rng::SplitMix64;
use qspy_circuit::{Circuit, Gate, GateKind, JobPayload, MAX_SIM_QUBITS};
use thiserror::Error;

pub const DEFAULT_SHOTS: u64 = 1000;
pub const DEFAULT_BACKEND: &str = "qspy_simulator";
const MAX_RANDOM_GATES: usize = 4096;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("{template}: {message}")]
    OutOfRange { template: String, message: String },
    #[error("bad workload item `{item}`: {message}")]
    Syntax { item: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    Bell,
    Ghz(usize),
    Random { qubits: usize, gates: usize, seed: u64 },
    Deterministic(usize),
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Template::Bell => write!(f, "bell"),
            Template::Ghz(n) => write!(f, "ghz({n})"),
            Template::Random { qubits, gates, seed } => write!(f, "random({qubits}, {gates}, {seed})"),
            Template::Deterministic(n) => write!(f, "deterministic({n})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadItem {
    pub repeat: usize,
    pub template: Template,
    pub shots: u64,
    pub backend: String,
    pub poll: bool,
}

/// One job to run: its position in the workload, the payload, and whether
/// the client should poll for results at all.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedJob {
    pub index: usize,
    pub template: String,
    pub payload: JobPayload,
    pub poll: bool,
}

pub fn parse_workload(spec: &str) -> Result<Vec<WorkloadItem>, WorkloadError> {
    spec.split([';', '\n'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_item)
        .collect()
}

/// Parses `spec` and builds every payload.
pub fn prepare_workload(spec: &str) -> Result<Vec<PlannedJob>, WorkloadError> {
    let mut jobs = Vec::new();
    for item in parse_workload(spec)? {
        for copy in 0..item.repeat {
            let template = match item.template {
                Template::Random { qubits, gates, seed } => Template::Random {
                    qubits,
                    gates,
                    seed: seed.wrapping_add(copy as u64),
                },
                t => t,
            };
            let index = jobs.len();
            let circuit = build(template)?;
            let metadata = BTreeMap::from([
                ("template".to_string(), template.to_string()),
                ("job_index".to_string(), index.to_string()),
            ]);
            let mut payload = JobPayload::new(circuit, item.shots, item.backend.clone());
            payload.client_metadata = metadata;
            jobs.push(PlannedJob {
                index,
                template: template.to_string(),
                payload,
                poll: item.poll,
            });
        }
    }
    Ok(jobs)
}

fn syntax(item: &str, message: impl Into<String>) -> WorkloadError {
    WorkloadError::Syntax {
        item: item.to_string(),
        message: message.into(),
    }
}

fn parse_item(item: &str) -> Result<WorkloadItem, WorkloadError> {
    let mut rest = item;
    let mut repeat = 1;
    if let Some((head, tail)) = rest.split_once(char::is_whitespace) {
        if let Some(n) = head.strip_suffix(['x', 'X']).filter(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit())) {
            repeat = n.parse().map_err(|_| syntax(item, "bad repeat count"))?;
            rest = tail.trim_start();
        }
    }

    let (template_text, options) = match rest.find('(') {
        Some(open) if !rest[..open].contains(char::is_whitespace) => {
            let close = rest.find(')').ok_or_else(|| syntax(item, "missing `)`"))?;
            (&rest[..=close], &rest[close + 1..])
        }
        _ => rest.split_once(char::is_whitespace).unwrap_or((rest, "")),
    };
    let template = parse_template(template_text.trim(), item)?;

    let mut parsed = WorkloadItem {
        repeat,
        template,
        shots: DEFAULT_SHOTS,
        backend: DEFAULT_BACKEND.to_string(),
        poll: true,
    };
    for opt in options.split_whitespace() {
        let (key, value) = opt
            .split_once('=')
            .ok_or_else(|| syntax(item, format!("expected key=value, got `{opt}`")))?;
        match key {
            "shots" => {
                parsed.shots = value.parse().map_err(|_| syntax(item, format!("bad shots `{value}`")))?;
                if parsed.shots == 0 {
                    return Err(syntax(item, "shots must be positive"));
                }
            }
            "backend" => parsed.backend = value.to_string(),
            "poll" => parsed.poll = value.parse().map_err(|_| syntax(item, format!("bad poll flag `{value}`")))?,
            other => return Err(syntax(item, format!("unknown option `{other}`"))),
        }
    }
    Ok(parsed)
}

fn parse_template(text: &str, item: &str) -> Result<Template, WorkloadError> {
    let (name, args) = match text.split_once('(') {
        Some((name, args)) => {
            let args = args.strip_suffix(')').ok_or_else(|| syntax(item, "missing `)`"))?;
            let args = args
                .split(',')
                .map(|a| a.trim().parse::<u64>().map_err(|_| syntax(item, format!("bad argument `{}`", a.trim()))))
                .collect::<Result<Vec<_>, _>>()?;
            (name.trim(), args)
        }
        None => (text, Vec::new()),
    };
    let arity = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(syntax(item, format!("`{name}` takes {n} argument(s), got {}", args.len())))
        }
    };
    let template = match name.to_ascii_lowercase().as_str() {
        "bell" => {
            arity(0)?;
            Template::Bell
        }
        "ghz" => {
            arity(1)?;
            Template::Ghz(args[0] as usize)
        }
        "random" => {
            arity(3)?;
            Template::Random {
                qubits: args[0] as usize,
                gates: args[1] as usize,
                seed: args[2],
            }
        }
        "deterministic" => {
            arity(1)?;
            Template::Deterministic(args[0] as usize)
        }
        _ => return Err(WorkloadError::UnknownTemplate(name.to_string())),
    };
    check_range(template)?;
    Ok(template)
}

fn check_range(t: Template) -> Result<(), WorkloadError> {
    let (qubits, min) = match t {
        Template::Bell => return Ok(()),
        Template::Ghz(n) => (n, 2),
        Template::Random { qubits, gates, .. } => {
            if gates > MAX_RANDOM_GATES {
                return Err(WorkloadError::OutOfRange {
                    template: t.to_string(),
                    message: format!("at most {MAX_RANDOM_GATES} gates"),
                });
            }
            (qubits, 1)
        }
        Template::Deterministic(n) => (n, 1),
    };
    if qubits < min || qubits > MAX_SIM_QUBITS {
        return Err(WorkloadError::OutOfRange {
            template: t.to_string(),
            message: format!("qubit count must be in {min}..={MAX_SIM_QUBITS}"),
        });
    }
    Ok(())
}

fn measure_all(c: &mut Circuit) {
    for q in 0..c.num_qubits() {
        c.push(Gate::measure(q)).expect("qubit in range");
    }
}

/// Builds the circuit for a template.
pub fn build(t: Template) -> Result<Circuit, WorkloadError> {
    check_range(t)?;
    let circuit = match t {
        Template::Bell => {
            let mut c = Circuit::empty(2).expect("2 qubits");
            c.push(Gate::h(0)).expect("valid");
            c.push(Gate::cx(0, 1)).expect("valid");
            measure_all(&mut c);
            c.with_name("bell")
        }
        Template::Ghz(n) => {
            let mut c = Circuit::empty(n).expect("checked range");
            c.push(Gate::h(0)).expect("valid");
            for q in 1..n {
                c.push(Gate::cx(q - 1, q)).expect("valid");
            }
            measure_all(&mut c);
            c.with_name(format!("ghz_{n}"))
        }
        Template::Random { qubits, gates, seed } => {
            let mut c = random_circuit(qubits, gates, seed);
            measure_all(&mut c);
            c.with_name(format!("random_{qubits}_{gates}_{seed}"))
        }
        Template::Deterministic(n) => {
            let mut c = Circuit::empty(n).expect("checked range");
            for q in (0..n).step_by(2) {
                c.push(Gate::x(q)).expect("valid");
            }
            measure_all(&mut c);
            c.with_name(format!("deterministic_{n}"))
        }
    };
    Ok(circuit.expect("template names are valid"))
}

/// `gates` unitary gates drawn uniformly from the non-measure gate set,
/// reproducible from `seed`.
fn random_circuit(qubits: usize, gates: usize, seed: u64) -> Circuit {
    let kinds: Vec<GateKind> = GateKind::ALL
        .iter()
        .copied()
        .filter(|k| *k != GateKind::Measure && (qubits > 1 || k.arity() == 1))
        .collect();
    let mut rng = SplitMix64::new(seed);
    let mut c = Circuit::empty(qubits).expect("checked range");
    for _ in 0..gates {
        let kind = kinds[rng.below(kinds.len() as u64) as usize];
        let a = rng.below(qubits as u64) as usize;
        let qs = if kind.arity() == 2 {
            let b = (a + 1 + rng.below(qubits as u64 - 1) as usize) % qubits;
            vec![a, b]
        } else {
            vec![a]
        };
        let angle = kind.is_rotation().then(|| rng.next_f64() * TAU);
        c.push(Gate::new(kind, qs, angle).expect("generated gate is valid"))
            .expect("qubits in range");
    }
    c
}
