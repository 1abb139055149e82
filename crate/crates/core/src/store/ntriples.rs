//! N-Triples rendering of call records.

use std::fmt::Write;

use crate::model::MethodCallRecord;

pub const NAMESPACE: &str = "urn:procsight:";
const XSD_DATE_TIME: &str = "http://www.w3.org/2001/XMLSchema#dateTime";

/// Subject IRI for a call. Characters outside the unreserved set are
/// percent-encoded so arbitrary call ids yield valid, distinct IRIs.
pub fn call_iri(call_id: &str) -> String {
    let mut out = String::from("urn:call:");
    for b in call_id.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'-' | b'.' | b'_' | b'~' | b':') {
            out.push(b as char);
        } else {
            let _ = write!(out, "%{b:02X}");
        }
    }
    out
}

/// Escapes a string for use inside a quoted N-Triples literal.
pub fn escape_literal(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 || c == '\u{7f}' => {
                let _ = write!(out, "\\u{:04X}", c as u32);
            }
            c => out.push(c),
        }
    }
    out
}

enum Object {
    Literal(String),
    Typed(String, &'static str),
    Iri(String),
}

impl Object {
    fn render(&self) -> String {
        match self {
            Object::Literal(s) => format!("\"{}\"", escape_literal(s)),
            Object::Typed(s, dt) => format!("\"{}\"^^<{dt}>", escape_literal(s)),
            Object::Iri(iri) => format!("<{iri}>"),
        }
    }
}

fn record_triples(r: &MethodCallRecord) -> Vec<(&'static str, Object)> {
    let mut out = vec![
        ("component", Object::Literal(r.component.clone())),
        ("methodName", Object::Literal(r.method_name.clone())),
        ("processId", Object::Literal(r.process_id.clone())),
        (
            "inputJson",
            Object::Literal(serde_json::to_string(&r.inputs).expect("inputs serialize")),
        ),
        (
            "outputJson",
            Object::Literal(serde_json::to_string(&r.output).expect("output serializes")),
        ),
        ("startedAt", Object::Typed(r.started_at.to_rfc3339(), XSD_DATE_TIME)),
        ("endedAt", Object::Typed(r.ended_at.to_rfc3339(), XSD_DATE_TIME)),
    ];
    if let Some(doc) = &r.docstring {
        out.push(("docstring", Object::Literal(doc.clone())));
    }
    if let Some(caller) = &r.caller_id {
        out.push(("callerId", Object::Literal(caller.clone())));
        out.push(("calledBy", Object::Iri(call_iri(caller))));
    }
    out
}

/// One line per triple, sorted by subject, predicate, then object.
pub fn render<'a>(records: impl IntoIterator<Item = &'a MethodCallRecord>) -> String {
    let mut lines: Vec<(String, String, String)> = records
        .into_iter()
        .flat_map(|r| {
            let subject = format!("<{}>", call_iri(&r.call_id));
            record_triples(r).into_iter().map(move |(pred, obj)| {
                (subject.clone(), format!("<{NAMESPACE}{pred}>"), obj.render())
            })
        })
        .collect();
    lines.sort();
    let mut out = String::new();
    for (s, p, o) in lines {
        let _ = writeln!(out, "{s} {p} {o} .");
    }
    out
}
