//! Turns a call record, plus the explanations of its direct sub-calls, into
//! either a fixed-wording template explanation or a prompt for a text
//! generator.

use std::fmt::Write;

use thiserror::Error;

use crate::model::{CallOutput, GenerationConfig, MethodCallRecord, SerializedValue};

pub const LEAF_TASK: &str =
    "Explain in plain language what this method call did, based only on the data below.";
pub const AGGREGATE_TASK: &str = "Explain in plain language what this method call did. \
Integrate the most relevant aspects of the sub-call explanations; omit details irrelevant \
to understanding the overall behavior or errors.";

const ELLIPSIS: char = '…';

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChildExplanation {
    pub method_name: String,
    pub text: String,
}

impl ChildExplanation {
    pub fn new(method_name: impl Into<String>, text: impl Into<String>) -> Self {
        Self { method_name: method_name.into(), text: text.into() }
    }
}

#[derive(Debug, Clone)]
pub struct VerbalizationInput<'a> {
    pub record: &'a MethodCallRecord,
    /// Method name of the caller, when the caller record is known.
    pub caller_method: Option<&'a str>,
    /// In call-tree child order; empty for leaves.
    pub child_explanations: Vec<ChildExplanation>,
    pub include_docstring: bool,
    pub max_child_chars: usize,
    pub max_prompt_chars: usize,
}

impl<'a> VerbalizationInput<'a> {
    /// A leaf input using the budgets and docstring toggle of `config`.
    pub fn new(record: &'a MethodCallRecord, config: &GenerationConfig) -> Self {
        Self {
            record,
            caller_method: None,
            child_explanations: Vec::new(),
            include_docstring: config.include_docstring,
            max_child_chars: config.max_child_chars,
            max_prompt_chars: config.max_prompt_chars,
        }
    }

    pub fn with_caller(mut self, caller_method: Option<&'a str>) -> Self {
        self.caller_method = caller_method;
        self
    }

    pub fn with_children(mut self, children: Vec<ChildExplanation>) -> Self {
        self.child_explanations = children;
        self
    }

    fn docstring(&self) -> Option<&'a str> {
        if self.include_docstring {
            self.record.docstring.as_deref()
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerbalizeError {
    #[error("prompt budget of {budget} chars is below the {minimum} chars the fixed sections need")]
    PromptImpossible { budget: usize, minimum: usize },
}

pub fn render_value(v: &SerializedValue) -> String {
    if v.truncated {
        format!("{}…[truncated, {} chars total]", v.text, v.total_length)
    } else {
        v.text.clone()
    }
}

/// Keeps the first `max` chars of `s`, marking any cut with `…`.
fn clip(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        None => s.to_owned(),
        Some((cut, _)) => {
            let mut out = s[..cut].to_owned();
            out.push(ELLIPSIS);
            out
        }
    }
}

fn char_len(s: &str) -> usize {
    s.chars().count()
}

fn leaf_sentence(input: &VerbalizationInput<'_>) -> String {
    let r = input.record;
    let args = if r.inputs.is_empty() {
        "no arguments".to_owned()
    } else {
        let joined: Vec<String> = r
            .inputs
            .iter()
            .map(|i| format!("{}=`{}`", i.param_name, render_value(&i.value)))
            .collect();
        format!("arguments {}", joined.join(", "))
    };
    let outcome = match &r.output {
        CallOutput::Void => "returned no value".to_owned(),
        CallOutput::Value(v) => format!("returned `{}`", render_value(v)),
        CallOutput::Error(m) => format!("raised error `{}`", render_value(m)),
    };
    let doc = input
        .docstring()
        .map(|d| format!(" Documentation: {d}"))
        .unwrap_or_default();
    format!(
        "Method `{}` in component `{}` was called with {args} and {outcome}.{doc}",
        r.method_name, r.component
    )
}

/// Explanation of a call from its own data only.
pub fn template_leaf(input: &VerbalizationInput<'_>) -> String {
    leaf_sentence(input)
}

/// The leaf sentence followed by a numbered list of the sub-call texts.
pub fn template_aggregate(input: &VerbalizationInput<'_>) -> String {
    let mut out = leaf_sentence(input);
    let _ = write!(out, " It performed {} direct sub-calls:", input.child_explanations.len());
    for (i, child) in input.child_explanations.iter().enumerate() {
        let _ = write!(out, "\n{}. {}", i + 1, clip(&child.text, input.max_child_chars));
    }
    out
}

/// Leaf or aggregate template depending on whether children are present.
pub fn template_explanation(input: &VerbalizationInput<'_>) -> String {
    if input.child_explanations.is_empty() {
        template_leaf(input)
    } else {
        template_aggregate(input)
    }
}

/// Variable-length parts of a prompt, gathered once and re-assembled under
/// shrinking limits until the result fits the budget.
struct PromptParts {
    task: &'static str,
    method: String,
    inputs: Vec<(String, String)>,
    output: Output,
    docstring: Option<String>,
    children: Vec<(String, String)>,
}

enum Output {
    Void,
    Value(String),
    Error(String),
}

#[derive(Clone, Copy, Default)]
struct Limits {
    /// Number of children dropped from the middle of the list.
    omitted: usize,
    /// Char cap for input/output renderings and child texts.
    value_cap: Option<usize>,
    docstring_cap: Option<usize>,
}

impl PromptParts {
    fn new(input: &VerbalizationInput<'_>) -> Self {
        let r = input.record;
        let mut method = format!("Component: {}\nMethod: {}", r.component, r.method_name);
        if let Some(caller) = input.caller_method {
            let _ = write!(method, "\nCaller: {caller}");
        }
        let output = match &r.output {
            CallOutput::Void => Output::Void,
            CallOutput::Value(v) => Output::Value(render_value(v)),
            CallOutput::Error(m) => Output::Error(render_value(m)),
        };
        Self {
            task: if input.child_explanations.is_empty() { LEAF_TASK } else { AGGREGATE_TASK },
            method,
            inputs: r
                .inputs
                .iter()
                .map(|i| (i.param_name.clone(), render_value(&i.value)))
                .collect(),
            output,
            docstring: input.docstring().map(str::to_owned),
            children: input
                .child_explanations
                .iter()
                .map(|c| (c.method_name.clone(), clip(&c.text, input.max_child_chars)))
                .collect(),
        }
    }

    /// Children kept before and after the omitted block.
    fn split(&self, omitted: usize) -> (usize, usize) {
        let kept = self.children.len() - omitted;
        let head = kept.div_ceil(2);
        (head, kept - head)
    }

    fn max_omissions(&self) -> usize {
        self.children.len().saturating_sub(2)
    }

    fn assemble(&self, limits: Limits) -> String {
        let cap = |s: &str| match limits.value_cap {
            Some(c) => clip(s, c),
            None => s.to_owned(),
        };
        let mut sections: Vec<(&str, String)> = vec![
            ("Task", self.task.to_owned()),
            ("Method", self.method.clone()),
        ];
        let inputs = if self.inputs.is_empty() {
            "none".to_owned()
        } else {
            self.inputs
                .iter()
                .map(|(name, value)| format!("{name}: {}", cap(value)))
                .collect::<Vec<_>>()
                .join("\n")
        };
        sections.push(("Inputs", inputs));
        let output = match &self.output {
            Output::Void => "void".to_owned(),
            Output::Value(v) => cap(v),
            Output::Error(m) => format!("ERROR: {}", cap(m)),
        };
        sections.push(("Output", output));
        if let Some(doc) = &self.docstring {
            let doc = match limits.docstring_cap {
                Some(c) => clip(doc, c),
                None => doc.clone(),
            };
            sections.push(("Docstring", doc));
        }
        if !self.children.is_empty() {
            let (head, tail) = self.split(limits.omitted);
            let n = self.children.len();
            let line = |i: usize| {
                let (method, text) = &self.children[i];
                format!("{}. [{method}] {}", i + 1, cap(text))
            };
            let mut lines: Vec<String> = (0..head).map(line).collect();
            if limits.omitted > 0 {
                lines.push(format!("[{} explanations omitted]", limits.omitted));
            }
            lines.extend((n - tail..n).map(line));
            sections.push(("Sub-call explanations", lines.join("\n")));
        }
        sections
            .into_iter()
            .map(|(header, body)| format!("### {header}\n{body}"))
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    fn longest_value(&self) -> usize {
        let output = match &self.output {
            Output::Void => 0,
            Output::Value(s) | Output::Error(s) => char_len(s),
        };
        self.inputs
            .iter()
            .map(|(_, v)| char_len(v))
            .chain(self.children.iter().map(|(_, t)| char_len(t)))
            .chain(std::iter::once(output))
            .max()
            .unwrap_or(0)
    }
}

/// Largest `x` in `0..=hi` with `fits(x)`, given `fits` is monotone
/// decreasing in `x` and `fits(0)` holds.
fn largest_fitting(hi: usize, fits: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, hi);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

/// Smallest `x` in `lo..=hi` with `fits(x)`, given `fits` is monotone
/// increasing in `x` and `fits(hi)` holds.
fn smallest_fitting(lo: usize, hi: usize, fits: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (lo, hi);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if fits(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Builds the provider prompt, shrinking it to `max_prompt_chars`.
///
/// Shrinking proceeds in stages until the prompt fits: sub-call entries are
/// dropped from the middle (first and last always stay), then input, output
/// and sub-call texts are clipped to a common length, then the docstring.
/// The Task and Method sections are never shortened.
pub fn build_prompt(input: &VerbalizationInput<'_>) -> Result<String, VerbalizeError> {
    let budget = input.max_prompt_chars;
    let parts = PromptParts::new(input);
    let fits = |limits: Limits| char_len(&parts.assemble(limits)) <= budget;

    let mut limits = Limits::default();
    if fits(limits) {
        return Ok(parts.assemble(limits));
    }

    let max_omit = parts.max_omissions();
    if max_omit > 0 {
        let all = Limits { omitted: max_omit, ..limits };
        if fits(all) {
            limits.omitted =
                smallest_fitting(1, max_omit, |k| fits(Limits { omitted: k, ..limits }));
            return Ok(parts.assemble(limits));
        }
        limits = all;
    }

    let value_fits = |c: usize| fits(Limits { value_cap: Some(c), ..limits });
    if value_fits(0) {
        limits.value_cap = Some(largest_fitting(parts.longest_value(), value_fits));
        return Ok(parts.assemble(limits));
    }
    limits.value_cap = Some(0);

    if let Some(doc) = &parts.docstring {
        let doc_fits = |d: usize| fits(Limits { docstring_cap: Some(d), ..limits });
        if doc_fits(0) {
            limits.docstring_cap = Some(largest_fitting(char_len(doc), doc_fits));
            return Ok(parts.assemble(limits));
        }
        limits.docstring_cap = Some(0);
    }

    Err(VerbalizeError::PromptImpossible {
        budget,
        minimum: char_len(&parts.assemble(limits)),
    })
}
