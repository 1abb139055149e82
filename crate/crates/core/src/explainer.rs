//! Hierarchical explanation of a call subtree.
//!
//! Every node below the requested call is explained before its parent, and
//! each parent aggregates the texts of its direct children. Work is planned
//! top-down (stopping at cached nodes) and executed bottom-up one depth
//! level at a time, so arbitrarily deep call chains need no recursion.

use std::collections::HashMap;
use std::sync::Arc;

use futures::stream::{self, StreamExt, TryStreamExt};
use parking_lot::Mutex;
use thiserror::Error;
use tokio::sync::OnceCell;

use crate::call_tree::{build_forest, CallNode, TreeError};
use crate::llm::{CompletionRequest, LlmError, ProviderRegistry};
use crate::model::{ConfigError, Explanation, GenerationConfig, GenerationMode, Timestamp};
use crate::store::{StoreError, TraceStore};
use crate::verbalizer::{
    build_prompt, template_explanation, ChildExplanation, VerbalizationInput, VerbalizeError,
};

pub const DEFAULT_LLM_PARALLELISM: usize = 4;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("invalid generation config: {0}")]
    InvalidConfig(#[from] ConfigError),
    #[error("{0}")]
    UnavailableModel(LlmError),
    #[error("unknown call_id `{0}`")]
    UnknownCallId(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot build prompt for `{call_id}`: {source}")]
    Prompt { call_id: String, source: VerbalizeError },
    #[error("provider failed while explaining `{call_id}`: {source}")]
    Provider { call_id: String, source: LlmError },
}

impl ExplainError {
    /// The call whose generation failed, for provider and prompt errors.
    pub fn failing_call_id(&self) -> Option<&str> {
        match self {
            ExplainError::Prompt { call_id, .. } | ExplainError::Provider { call_id, .. } => {
                Some(call_id)
            }
            _ => None,
        }
    }
}

type FlightKey = (String, String);

pub struct Explainer {
    store: Arc<TraceStore>,
    providers: ProviderRegistry,
    inflight: Mutex<HashMap<FlightKey, Arc<OnceCell<Explanation>>>>,
    llm_parallelism: usize,
    generation_log: Option<Mutex<Vec<String>>>,
}

/// One node scheduled for generation.
struct Planned<'f> {
    node: CallNode<'f>,
    /// Cache key hash; `None` for nodes cut off by `max_depth`, which are
    /// verbalized as leaves and not cached.
    cache_hash: Option<String>,
    children: Vec<CallNode<'f>>,
}

impl Explainer {
    pub fn new(store: Arc<TraceStore>, providers: ProviderRegistry) -> Self {
        Self {
            store,
            providers,
            inflight: Mutex::new(HashMap::new()),
            llm_parallelism: DEFAULT_LLM_PARALLELISM,
            generation_log: None,
        }
    }

    /// Maximum concurrent provider calls among siblings in LLM mode.
    pub fn with_parallelism(mut self, n: usize) -> Self {
        self.llm_parallelism = n.max(1);
        self
    }

    /// Records the call id of every generated (not cached) explanation.
    pub fn with_generation_log(mut self) -> Self {
        self.generation_log = Some(Mutex::new(Vec::new()));
        self
    }

    /// Call ids in the order their explanations were generated.
    pub fn generation_log(&self) -> Vec<String> {
        self.generation_log
            .as_ref()
            .map(|log| log.lock().clone())
            .unwrap_or_default()
    }

    pub fn store(&self) -> &Arc<TraceStore> {
        &self.store
    }

    pub fn providers(&self) -> &ProviderRegistry {
        &self.providers
    }

    /// Checks `config` on its own and against the registered providers.
    pub fn validate_config(&self, config: &GenerationConfig) -> Result<(), ExplainError> {
        config.validate()?;
        if config.mode == GenerationMode::Llm {
            self.providers
                .check(
                    config.provider_id.as_deref().unwrap_or_default(),
                    config.model_id.as_deref().unwrap_or_default(),
                )
                .map_err(ExplainError::UnavailableModel)?;
        }
        Ok(())
    }

    /// Explains `call_id` and, as needed, every call beneath it.
    pub async fn explain(
        &self,
        call_id: &str,
        config: &GenerationConfig,
    ) -> Result<Explanation, ExplainError> {
        self.validate_config(config)?;
        let hash = config.hash();
        if let Some(hit) = self.store.get_cached_explanation(call_id, &hash) {
            return Ok(hit);
        }
        let record = self
            .store
            .get_record(call_id)
            .ok_or_else(|| ExplainError::UnknownCallId(call_id.to_owned()))?;
        let forest = build_forest(self.store.records_for_process(&record.process_id)?)?;
        let root = forest.subtree(call_id)?;

        let (levels, mut texts) = self.plan(root, config);
        let parallelism = match config.mode {
            GenerationMode::Template => 1,
            GenerationMode::Llm => self.llm_parallelism,
        };

        let mut result = None;
        for level in levels.iter().rev() {
            let mut pending = Vec::with_capacity(level.len());
            for item in level {
                pending.push(self.generate(item, &texts, config));
            }
            let done: Vec<Explanation> = stream::iter(pending)
                .buffer_unordered(parallelism)
                .try_collect()
                .await?;
            for e in done {
                if e.call_id == root.call_id() {
                    result = Some(e);
                } else {
                    let idx = forest.get(&e.call_id).expect("generated from this forest").index();
                    texts.insert(idx, e.text);
                }
            }
        }
        Ok(result.expect("root is always planned"))
    }

    /// Walks down from `root`, stopping at cached nodes and at the depth
    /// limit. Returns the nodes to generate grouped by relative depth, and
    /// the texts already available from the cache.
    fn plan<'f>(
        &self,
        root: CallNode<'f>,
        config: &GenerationConfig,
    ) -> (Vec<Vec<Planned<'f>>>, HashMap<usize, String>) {
        let limit = config.max_depth;
        let hash_at = |depth: usize| -> Option<String> {
            if limit == 0 {
                Some(config.hash())
            } else if depth < limit {
                // Below the root a node sees only the remaining depth budget,
                // which is what a direct request with that budget would see.
                Some(GenerationConfig { max_depth: limit - depth, ..config.clone() }.hash())
            } else {
                None
            }
        };

        let mut levels: Vec<Vec<Planned<'f>>> = Vec::new();
        let mut cached = HashMap::new();
        let mut stack = vec![(root, 0usize)];
        while let Some((node, depth)) = stack.pop() {
            let cache_hash = hash_at(depth);
            if depth > 0 {
                if let Some(h) = &cache_hash {
                    if let Some(hit) = self.store.get_cached_explanation(node.call_id(), h) {
                        cached.insert(node.index(), hit.text);
                        continue;
                    }
                }
            }
            let cut = limit != 0 && depth >= limit;
            let children: Vec<_> = if cut { Vec::new() } else { node.children().collect() };
            stack.extend(children.iter().map(|&c| (c, depth + 1)));
            if levels.len() <= depth {
                levels.resize_with(depth + 1, Vec::new);
            }
            levels[depth].push(Planned { node, cache_hash, children });
        }
        (levels, cached)
    }

    async fn generate(
        &self,
        item: &Planned<'_>,
        texts: &HashMap<usize, String>,
        config: &GenerationConfig,
    ) -> Result<Explanation, ExplainError> {
        let build = || self.verbalize(item, texts, config);
        match &item.cache_hash {
            None => build().await,
            Some(hash) => self.single_flight(item.node.call_id(), hash, build).await,
        }
    }

    /// At most one generation per `(call_id, config_hash)` runs at a time;
    /// concurrent callers share its result.
    async fn single_flight<F, Fut>(
        &self,
        call_id: &str,
        hash: &str,
        build: F,
    ) -> Result<Explanation, ExplainError>
    where
        F: FnOnce() -> Fut,
        Fut: std::future::Future<Output = Result<Explanation, ExplainError>>,
    {
        let key = (call_id.to_owned(), hash.to_owned());
        let cell = self.inflight.lock().entry(key.clone()).or_default().clone();
        let result = cell
            .get_or_try_init(|| async {
                if let Some(hit) = self.store.get_cached_explanation(call_id, hash) {
                    return Ok(hit);
                }
                let explanation = build().await?;
                self.store.put_cached_explanation(&explanation)?;
                if let Some(log) = &self.generation_log {
                    log.lock().push(call_id.to_owned());
                }
                Ok(explanation)
            })
            .await
            .cloned();
        let mut inflight = self.inflight.lock();
        if inflight.get(&key).is_some_and(|c| Arc::ptr_eq(c, &cell)) {
            inflight.remove(&key);
        }
        result
    }

    async fn verbalize(
        &self,
        item: &Planned<'_>,
        texts: &HashMap<usize, String>,
        config: &GenerationConfig,
    ) -> Result<Explanation, ExplainError> {
        let node = item.node;
        let children: Vec<ChildExplanation> = item
            .children
            .iter()
            .map(|c| ChildExplanation::new(&c.record().method_name, texts[&c.index()].clone()))
            .collect();
        let input = VerbalizationInput::new(node.record(), config)
            .with_caller(node.parent().map(|p| p.record().method_name.as_str()))
            .with_children(children);

        let (text, prompt) = match config.mode {
            GenerationMode::Template => (template_explanation(&input), None),
            GenerationMode::Llm => {
                let prompt = build_prompt(&input).map_err(|source| ExplainError::Prompt {
                    call_id: node.call_id().to_owned(),
                    source,
                })?;
                let request = CompletionRequest {
                    temperature: config.temperature,
                    ..CompletionRequest::new(
                        prompt.clone(),
                        config.model_id.clone().unwrap_or_default(),
                    )
                };
                let text = self
                    .providers
                    .complete(config.provider_id.as_deref().unwrap_or_default(), &request)
                    .await
                    .map_err(|source| ExplainError::Provider {
                        call_id: node.call_id().to_owned(),
                        source,
                    })?;
                (text, Some(prompt))
            }
        };
        Ok(Explanation {
            call_id: node.call_id().to_owned(),
            config_hash: item.cache_hash.clone().unwrap_or_else(|| config.hash()),
            text,
            prompt,
            child_call_ids: item.children.iter().map(|c| c.call_id().to_owned()).collect(),
            generated_at: Timestamp::now(),
            from_cache: false,
        })
    }

    /// Drops cached explanations of `call_id` and of all its ancestors,
    /// under every config. Returns the number of entries removed.
    pub fn invalidate(&self, call_id: &str) -> Result<usize, ExplainError> {
        let mut current = Some(
            self.store
                .get_record(call_id)
                .ok_or_else(|| ExplainError::UnknownCallId(call_id.to_owned()))?,
        );
        let mut seen = std::collections::HashSet::new();
        let mut removed = 0;
        while let Some(record) = current {
            if !seen.insert(record.call_id.clone()) {
                break;
            }
            removed += self.store.remove_cached_explanations(&record.call_id)?;
            current = record
                .caller_id
                .as_deref()
                .and_then(|c| self.store.get_record(c))
                .filter(|caller| caller.process_id == record.process_id);
        }
        Ok(removed)
    }
}
