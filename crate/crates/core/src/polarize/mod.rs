//! Prompt polarization: rewrite operators, cyclic chain orders and the
//! per-anchor prompt sets built from them.
//!
//! For anchor `a` of an `n`-dimensional space, chain `j` rewrites the base
//! prompt along dimensions `j, j+1, ..., n, 1, ..., j-1` (in that order),
//! each toward pole `a_i`. Stacking the `n` orders gives a cyclic Latin
//! square, so every dimension is applied at every position exactly once
//! across the set.

mod cache;
mod llm;
mod template;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cogspace::{CognitiveAnchor, CognitiveSpace, DimensionSpec, Pole, MAX_DIMENSIONS};

pub use cache::{cache_digest, PolarizationCache, DEFAULT_CACHE_PATH};
pub use llm::{instruction, LlmBackend, LlmConfig, API_KEY_ENV};
pub use template::{parse_template, render, TemplateBackend, TEMPLATE_BACKEND_ID};

#[derive(Debug, Error)]
pub enum PolarizeError {
    #[error("cannot polarize an empty prompt")]
    EmptyPrompt,
    #[error("backend error (retriable: {retriable}): {message}")]
    Backend { retriable: bool, message: String },
    #[error("polarization cache {path}: {message}")]
    Cache { path: String, message: String },
    #[error("anchor {anchor} does not belong to a {n}-dimensional space")]
    ForeignAnchor { anchor: String, n: usize },
    #[error("number of dimensions must be in 1..={MAX_DIMENSIONS}, got {0}")]
    DimensionCount(usize),
    #[error("anchor {anchor}, chain {chain}, step {step}: {source}")]
    InChain {
        anchor: String,
        chain: usize,
        step: usize,
        #[source]
        source: Box<PolarizeError>,
    },
}

/// The rewrite operator `f_d^a`.
pub trait PolarizerBackend: Send + Sync {
    /// Identifies the backend in cache keys.
    fn backend_id(&self) -> &str;

    fn polarize(
        &self,
        prompt: &str,
        dimension: &DimensionSpec,
        pole: Pole,
    ) -> Result<String, PolarizeError>;
}

/// One rewrite through the cache.
pub fn polarize_once(
    backend: &dyn PolarizerBackend,
    cache: &PolarizationCache,
    prompt: &str,
    dimension: &DimensionSpec,
    pole: Pole,
) -> Result<String, PolarizeError> {
    if prompt.is_empty() {
        return Err(PolarizeError::EmptyPrompt);
    }
    let digest = cache_digest(backend.backend_id(), prompt, &dimension.name, pole);
    cache.get_or_fetch(&digest, || backend.polarize(prompt, dimension, pole))
}

/// Cyclic rotations of `1..=n`: order `j` is `(j, j+1, ..., n, 1, ..., j-1)`.
pub fn build_chain_orders(n: usize) -> Result<Vec<Vec<usize>>, PolarizeError> {
    if n == 0 || n > MAX_DIMENSIONS {
        return Err(PolarizeError::DimensionCount(n));
    }
    Ok((0..n)
        .map(|j| (0..n).map(|p| (j + p) % n + 1).collect())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptChain {
    /// `(dimension index, pole)` in application order.
    pub applications: Vec<(usize, Pole)>,
    /// Prompt after each application; the last one is `result`.
    pub intermediates: Vec<String>,
    pub result: String,
}

impl PromptChain {
    pub fn order(&self) -> Vec<usize> {
        self.applications.iter().map(|(d, _)| *d).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizedPromptSet {
    pub anchor: CognitiveAnchor,
    pub base_prompt: String,
    pub chains: Vec<PromptChain>,
}

impl PolarizedPromptSet {
    pub fn results(&self) -> impl Iterator<Item = &str> {
        self.chains.iter().map(|c| c.result.as_str())
    }
}

pub fn build_prompt_set(
    backend: &dyn PolarizerBackend,
    prompt: &str,
    anchor: &CognitiveAnchor,
    space: &CognitiveSpace,
    cache: &PolarizationCache,
) -> Result<PolarizedPromptSet, PolarizeError> {
    if anchor.n() != space.n() {
        return Err(PolarizeError::ForeignAnchor {
            anchor: anchor.to_string(),
            n: space.n(),
        });
    }
    if prompt.is_empty() {
        return Err(PolarizeError::EmptyPrompt);
    }
    let orders = build_chain_orders(space.n())?;
    let mut chains = Vec::with_capacity(orders.len());
    for (j, order) in orders.into_iter().enumerate() {
        let mut current = prompt.to_owned();
        let mut applications = Vec::with_capacity(order.len());
        let mut intermediates = Vec::with_capacity(order.len());
        for (step, &dim) in order.iter().enumerate() {
            let pole = anchor.pole(dim - 1);
            let spec = space.dimension(dim).expect("order indices are within the space");
            current = polarize_once(backend, cache, &current, spec, pole).map_err(|e| {
                PolarizeError::InChain {
                    anchor: anchor.to_string(),
                    chain: j + 1,
                    step: step + 1,
                    source: Box::new(e),
                }
            })?;
            applications.push((dim, pole));
            intermediates.push(current.clone());
        }
        chains.push(PromptChain {
            applications,
            intermediates,
            result: current,
        });
    }
    Ok(PolarizedPromptSet {
        anchor: anchor.clone(),
        base_prompt: prompt.to_owned(),
        chains,
    })
}

/// Prompt sets for every anchor, in canonical anchor order.
pub fn build_all_sets(
    backend: &dyn PolarizerBackend,
    prompt: &str,
    space: &CognitiveSpace,
    cache: &PolarizationCache,
) -> Result<Vec<PolarizedPromptSet>, PolarizeError> {
    space
        .enumerate_anchors()
        .iter()
        .map(|a| build_prompt_set(backend, prompt, a, space, cache))
        .collect()
}

/// Export document for external generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSetExport {
    pub base_prompt: String,
    pub space: CognitiveSpace,
    pub sets: Vec<ExportedSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedSet {
    pub anchor_bits: Vec<u8>,
    pub chains: Vec<ExportedChain>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedChain {
    pub order: Vec<usize>,
    pub result: String,
}

impl PromptSetExport {
    pub fn new(base_prompt: &str, space: &CognitiveSpace, sets: &[PolarizedPromptSet]) -> Self {
        Self {
            base_prompt: base_prompt.to_owned(),
            space: space.clone(),
            sets: sets
                .iter()
                .map(|s| ExportedSet {
                    anchor_bits: s.anchor.bits().to_vec(),
                    chains: s
                        .chains
                        .iter()
                        .map(|c| ExportedChain {
                            order: c.order(),
                            result: c.result.clone(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}
