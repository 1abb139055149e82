//! Seeded synthetic multi-component process traces.
//!
//! The PRNG is `Xoshiro256PlusPlus` seeded through `seed_from_u64`; with the
//! pinned `rand`/`rand_xoshiro` versions the output for a given parameter set
//! is byte-identical across runs and platforms.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use thiserror::Error;

use crate::model::{truncate_value, CallInput, CallOutput, MethodCallRecord, Timestamp};

/// 2025-01-01T00:00:00Z
pub const DEFAULT_START_MICROS: i64 = 1_735_689_600_000_000;

const VERBS: [(&str, &str); 8] = [
    ("handle", "Entry point that handles an incoming request"),
    ("parse", "Parses the raw payload into a structured form"),
    ("validate", "Checks the structured payload against the component's rules"),
    ("lookup", "Looks up related entities in the knowledge base"),
    ("transform", "Transforms intermediate results into the target representation"),
    ("annotate", "Adds annotations derived from earlier steps"),
    ("store", "Persists intermediate results"),
    ("dispatch", "Forwards work to a downstream component"),
];
const PARAMS: [&str; 6] = ["query", "id", "payload", "limit", "context", "options"];
const FAULTS: [&str; 4] = [
    "NullPointerException",
    "TimeoutException",
    "IllegalStateException",
    "IOException",
];
const INTER_COMPONENT_PROBABILITY: f64 = 0.3;
const VOID_PROBABILITY: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub components: usize,
    pub calls: usize,
    pub max_fanout: usize,
    /// Maximum number of levels, counting the root as level 1.
    pub max_depth: usize,
    pub fault_rate: f64,
    pub seed: u64,
    pub process_id: Option<String>,
    pub start: Timestamp,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            components: 3,
            calls: 100,
            max_fanout: 8,
            max_depth: 16,
            fault_rate: 0.0,
            seed: 0,
            process_id: None,
            start: Timestamp::from_micros(DEFAULT_START_MICROS),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeneratorError {
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        let positive = [
            ("components", self.components),
            ("calls", self.calls),
            ("max_fanout", self.max_fanout),
            ("max_depth", self.max_depth),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(GeneratorError::OutOfRange(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.fault_rate) {
            return Err(GeneratorError::OutOfRange(format!(
                "fault_rate must be within [0, 1], got {}",
                self.fault_rate
            )));
        }
        if self.process_id.as_deref() == Some("") {
            return Err(GeneratorError::OutOfRange("process_id must not be empty".into()));
        }
        Ok(())
    }

    pub fn effective_process_id(&self) -> String {
        self.process_id.clone().unwrap_or_else(|| {
            format!("proc-s{}-n{}-m{}", self.seed, self.components, self.calls)
        })
    }
}

pub fn component_name(i: usize) -> String {
    if i < 26 {
        format!("Component{}", (b'A' + i as u8) as char)
    } else {
        format!("Component{}", i + 1)
    }
}

fn method_name(component: usize, verb: usize) -> String {
    let name = component_name(component);
    format!("org.example.{}.{}Service.{}", name.to_lowercase(), name, VERBS[verb].0)
}

fn synthetic_value(rng: &mut Xoshiro256PlusPlus) -> String {
    match rng.random_range(0..3) {
        0 => rng.random_range(0..10_000).to_string(),
        1 => format!("\"item-{:04x}\"", rng.random_range(0..0x1_0000u32)),
        _ => format!(
            "{{\"score\": {:.3}, \"count\": {}}}",
            rng.random::<f64>(),
            rng.random_range(0..100)
        ),
    }
}

/// Produces exactly `params.calls` records of one process.
pub fn generate(params: &GeneratorParams) -> Result<Vec<MethodCallRecord>, GeneratorError> {
    params.validate()?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(params.seed);
    let pid = params.effective_process_id();
    let n = params.calls;

    // Docstrings for a seeded half of the distinct methods.
    let docs: Vec<Vec<Option<String>>> = (0..params.components)
        .map(|c| {
            VERBS
                .iter()
                .map(|(_, doc)| {
                    rng.random_bool(0.5)
                        .then(|| format!("{doc} ({}).", component_name(c)))
                })
                .collect()
        })
        .collect();

    let mut parent: Vec<Option<usize>> = Vec::with_capacity(n);
    let mut depth: Vec<usize> = Vec::with_capacity(n);
    let mut fanout: Vec<usize> = vec![0; n];
    let mut component: Vec<usize> = Vec::with_capacity(n);
    let mut open: Vec<usize> = Vec::new();
    for i in 0..n {
        let p = if i == 0 || open.is_empty() {
            None
        } else {
            let k = rng.random_range(0..open.len());
            let p = open[k];
            fanout[p] += 1;
            if fanout[p] == params.max_fanout {
                open.swap_remove(k);
            }
            Some(p)
        };
        let d = p.map_or(1, |p| depth[p] + 1);
        let c = match p {
            None => 0,
            Some(_) if rng.random_bool(INTER_COMPONENT_PROBABILITY) => {
                rng.random_range(0..params.components)
            }
            Some(p) => component[p],
        };
        parent.push(p);
        depth.push(d);
        component.push(c);
        if d < params.max_depth {
            open.push(i);
        }
    }

    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut roots = Vec::new();
    for (i, p) in parent.iter().enumerate() {
        match p {
            Some(p) => children[*p].push(i),
            None => roots.push(i),
        }
    }

    // Lay out intervals with an explicit pre-order walk so every child runs
    // strictly inside its parent and siblings run one after another.
    let mut start = vec![0i64; n];
    let mut end = vec![0i64; n];
    let mut clock = params.start.as_micros();
    enum Step {
        Enter(usize),
        Exit(usize),
    }
    let mut stack: Vec<Step> = roots.iter().rev().map(|&r| Step::Enter(r)).collect();
    while let Some(step) = stack.pop() {
        match step {
            Step::Enter(i) => {
                start[i] = clock;
                clock += 1 + rng.random_range(0..50);
                stack.push(Step::Exit(i));
                stack.extend(children[i].iter().rev().map(|&c| Step::Enter(c)));
            }
            Step::Exit(i) => {
                clock += 1 + rng.random_range(0..20);
                end[i] = clock;
                clock += 1;
            }
        }
    }

    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let verb = if parent[i].is_none() { 0 } else { rng.random_range(0..VERBS.len()) };
        let input_count = rng.random_range(0..=3);
        let inputs = (0..input_count)
            .map(|k| {
                let name = PARAMS[(k + rng.random_range(0..PARAMS.len())) % PARAMS.len()];
                CallInput::new(format!("{name}{k}"), truncate_value(&synthetic_value(&mut rng)))
            })
            .collect();
        let output = if rng.random_bool(params.fault_rate) {
            let fault = FAULTS[rng.random_range(0..FAULTS.len())];
            CallOutput::Error(truncate_value(&format!(
                "{fault}: simulated fault in {}",
                VERBS[verb].0
            )))
        } else if rng.random_bool(VOID_PROBABILITY) {
            CallOutput::Void
        } else {
            CallOutput::Value(truncate_value(&synthetic_value(&mut rng)))
        };
        records.push(MethodCallRecord {
            call_id: format!("{pid}-{i:06}"),
            process_id: pid.clone(),
            component: component_name(component[i]),
            method_name: method_name(component[i], verb),
            caller_id: parent[i].map(|p| format!("{pid}-{p:06}")),
            inputs,
            output,
            docstring: docs[component[i]][verb].clone(),
            started_at: Timestamp::from_micros(start[i]),
            ended_at: Timestamp::from_micros(end[i]),
        });
    }
    Ok(records)
}

/// Writes records in the newline-delimited wire form.
pub fn write_records(records: &[MethodCallRecord], mut out: impl Write) -> io::Result<()> {
    for r in records {
        out.write_all(r.to_wire_line().as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
