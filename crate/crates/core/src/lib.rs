//! Continuous multi-dimensional steering of flow-matching generation.
//!
//! A target profile `s` in the unit hypercube is realized by blending the
//! velocity fields conditioned on the hypercube's vertex prompts with
//! multilinear weights, then integrating the probability-flow ODE. The
//! velocity predictor is replaced by closed-form fields of Gaussian-mixture
//! targets, so every stage can be checked against an exact reference.
//!
//! Module map:
//! - [`cogspace`]: dimensions, anchors and interpolation weights.
//! - [`polarize`]: prompt rewriting operators, cyclic chain orders, prompt sets.
//! - [`semantics`]: prompt-to-distribution binding and exact marginal fields.
//! - [`blend`]: the weighted anchor/base velocity combination.
//! - [`flow`]: fixed-step ODE integration, batch generation, moment oracle.
//! - [`harness`]: named experiments and report emission.

pub mod blend;
pub mod cogspace;
pub mod config;
pub mod flow;
pub mod harness;
pub mod output;
pub mod polarize;
pub mod semantics;
pub mod stats;
pub mod stream;
pub mod verify;

pub use cogspace::{CognitiveAnchor, CognitiveSpace, DimensionSpec, Pole, ScoreVector};
