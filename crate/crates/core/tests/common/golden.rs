//! Replays the curated verbalizer cases in `tests/golden/cases.json`.

use std::path::{Path, PathBuf};

use procsight_core::model::{GenerationConfig, MethodCallRecord};
use procsight_core::verbalizer::{build_prompt, template_explanation, ChildExplanation, VerbalizationInput};
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    name: String,
    record: serde_json::Value,
    caller_method: Option<String>,
    children: Vec<ChildCase>,
    include_docstring: bool,
    max_child_chars: usize,
    max_prompt_chars: usize,
}

#[derive(Deserialize)]
struct ChildCase {
    method_name: String,
    text: String,
}

pub struct GoldenOutcome {
    pub name: String,
    pub template_ok: bool,
    pub prompt_ok: bool,
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden")
}

pub fn run_golden_cases(dir: &Path) -> Vec<GoldenOutcome> {
    let raw = std::fs::read_to_string(dir.join("cases.json")).expect("cases.json");
    let cases: Vec<Case> = serde_json::from_str(&raw).expect("cases.json parses");
    cases
        .into_iter()
        .map(|case| {
            let record = MethodCallRecord::from_wire_line(&case.record.to_string()).expect("record");
            let config = GenerationConfig {
                include_docstring: case.include_docstring,
                max_child_chars: case.max_child_chars,
                max_prompt_chars: case.max_prompt_chars,
                ..GenerationConfig::template()
            };
            let input = VerbalizationInput::new(&record, &config)
                .with_caller(case.caller_method.as_deref())
                .with_children(
                    case.children.into_iter().map(|c| ChildExplanation::new(c.method_name, c.text)).collect(),
                );
            let read = |kind: &str| std::fs::read(dir.join(format!("{}.{kind}.txt", case.name))).expect("golden file");
            let template = template_explanation(&input);
            let prompt = build_prompt(&input).map(String::into_bytes).unwrap_or_default();
            GoldenOutcome {
                template_ok: template.as_bytes() == read("template"),
                prompt_ok: prompt == read("prompt"),
                name: case.name,
            }
        })
        .collect()
}
