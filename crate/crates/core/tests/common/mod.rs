#![allow(dead_code)]

use procsight_core::model::{truncate_value, CallInput, CallOutput, MethodCallRecord, Timestamp};

/// Straightforward FNV-1a 64 written independently of the crate's version.
pub fn oracle_fnv1a_64(bytes: &[u8]) -> String {
    let mut h: u128 = 14_695_981_039_346_656_037;
    for &b in bytes {
        h ^= b as u128;
        h = (h * 1_099_511_628_211) % (1u128 << 64);
    }
    format!("{h:016x}")
}

pub fn mock_answer(prompt: &str) -> String {
    format!("MOCK-EXPLANATION[{}]", oracle_fnv1a_64(prompt.as_bytes()))
}

pub fn record(pid: &str, id: &str, caller: Option<&str>, start: i64) -> MethodCallRecord {
    MethodCallRecord {
        call_id: id.into(),
        process_id: pid.into(),
        component: if start % 2 == 0 { "CompA".into() } else { "CompB".into() },
        method_name: format!("method_{id}"),
        caller_id: caller.map(Into::into),
        inputs: vec![CallInput::new("n", &*start.to_string())],
        output: CallOutput::Value(truncate_value(&format!("out-{id}"))),
        docstring: None,
        started_at: Timestamp::from_micros(1_700_000_000_000_000 + start),
        ended_at: Timestamp::from_micros(1_700_000_000_000_000 + start + 1_000_000),
    }
}

/// 1 root, 2 children, 4 grandchildren.
pub fn three_level_tree(pid: &str) -> Vec<MethodCallRecord> {
    vec![
        record(pid, "root", None, 0),
        record(pid, "c1", Some("root"), 10),
        record(pid, "c2", Some("root"), 20),
        record(pid, "g11", Some("c1"), 11),
        record(pid, "g12", Some("c1"), 12),
        record(pid, "g21", Some("c2"), 21),
        record(pid, "g22", Some("c2"), 22),
    ]
}

/// Random single-process tree; each record's parent is a uniformly chosen
/// earlier record. Start times are shuffled so input order carries no
/// structure.
pub fn random_tree(pid: &str, n: usize, seed: u64) -> Vec<MethodCallRecord> {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let caller = if i == 0 || rng.random_bool(0.05) {
            None
        } else {
            Some(format!("n{}", rng.random_range(0..i)))
        };
        let start = rng.random_range(0..50) as i64;
        out.push(record(pid, &format!("n{i}"), caller.as_deref(), start));
    }
    out.shuffle(&mut rng);
    out
}
