//! Post-hoc explanation of distributed process executions.
//!
//! Components log one [`MethodCallRecord`] per method call (inputs, output,
//! docstring and caller). After a process has run, its records are
//! reassembled into a call forest and any subtree can be explained bottom-up:
//! leaves from their own data, callers by aggregating the explanations of
//! their direct sub-calls, either with fixed templates or through a text
//! generation provider.

pub mod call_tree;
pub mod explainer;
pub mod generator;
pub mod llm;
pub mod model;
pub mod store;
pub mod verbalizer;

pub use call_tree::{build_forest, call_sequence, CallForest, CallNode, TreeError};
pub use explainer::{ExplainError, Explainer};
pub use llm::{
    CompletionProvider, CompletionRequest, LlmError, MockProvider, ProviderDescriptor,
    ProviderKind, ProviderRegistry,
};
pub use model::{
    CallInput, CallOutput, Explanation, GenerationConfig, GenerationMode, MethodCallRecord,
    SerializedValue, Timestamp,
};
pub use store::{ProcessSummary, StoreError, TraceStore};
