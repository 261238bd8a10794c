//! Weighted combination of anchor and base velocity fields.
//!
//! ```text
//! v(x, t) = (1 - lambda) * sum_k w_k(s) * vhat_k(x, t) + lambda * v_base(x, t)
//! ```
//!
//! `vhat_k` is the mean of anchor `k`'s chain fields (full-average mode) or
//! one uniformly drawn chain field (stochastic mode). `lambda` is the base
//! share: 0 drops the base field, 1 keeps only the base, 0.5 is the even split.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cogspace::{CognitiveAnchor, CognitiveSpace, ScoreVector, SpaceError};
use crate::semantics::{AffineCoefficients, VelocityField};
use crate::stream;

pub type SharedField = Arc<dyn VelocityField>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BlendError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("expected {expected} anchor entries, got {actual}")]
    AnchorCount { expected: usize, actual: usize },
    #[error("anchor entry {position} is {found}, expected canonical anchor {expected}")]
    AnchorOrder {
        position: usize,
        expected: String,
        found: String,
    },
    #[error("anchor {anchor} holds {actual} chain fields, expected {expected}")]
    ChainCount {
        anchor: String,
        expected: usize,
        actual: usize,
    },
    #[error("field dimension {actual} does not match {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("base mix {0} is outside [0, 1]")]
    BaseMix(f64),
    #[error("time {0} is outside [0, 1]")]
    Time(f64),
    #[error("{0} requires at least one draw")]
    TooFewDraws(&'static str),
    #[error("field {0} is not affine in x")]
    NotAffine(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlendMode {
    /// One uniformly drawn chain field per anchor.
    Stochastic,
    /// Mean over all chain fields of each anchor.
    #[default]
    FullAverage,
}

/// When the stochastic chain draw is refreshed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawPolicy {
    /// A fresh draw on every field evaluation.
    #[default]
    PerEvaluation,
    /// One draw per solver step, shared by that step's stages.
    PerStep,
}

#[derive(Clone)]
pub struct AnchorFields {
    pub anchor: CognitiveAnchor,
    /// One field per chain of the anchor's prompt set.
    pub chains: Vec<SharedField>,
}

#[derive(Clone)]
pub struct BlendSpec {
    base: SharedField,
    anchors: Vec<AnchorFields>,
    score: ScoreVector,
    weights: Vec<f64>,
    mode: BlendMode,
    lambda: f64,
    draw: DrawPolicy,
    dim: usize,
}

impl std::fmt::Debug for BlendSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlendSpec")
            .field("anchors", &self.anchors.len())
            .field("score", &self.score)
            .field("weights", &self.weights)
            .field("mode", &self.mode)
            .field("lambda", &self.lambda)
            .field("draw", &self.draw)
            .field("dim", &self.dim)
            .finish()
    }
}

impl BlendSpec {
    pub fn new(
        space: &CognitiveSpace,
        base: SharedField,
        anchors: Vec<AnchorFields>,
        score: ScoreVector,
        mode: BlendMode,
        lambda: f64,
    ) -> Result<Self, BlendError> {
        let n = space.n();
        if anchors.len() != space.anchor_count() {
            return Err(BlendError::AnchorCount {
                expected: space.anchor_count(),
                actual: anchors.len(),
            });
        }
        let dim = base.dim();
        for (pos, (entry, canonical)) in anchors.iter().zip(space.enumerate_anchors()).enumerate() {
            if entry.anchor != canonical {
                return Err(BlendError::AnchorOrder {
                    position: pos + 1,
                    expected: canonical.to_string(),
                    found: entry.anchor.to_string(),
                });
            }
            if entry.chains.len() != n {
                return Err(BlendError::ChainCount {
                    anchor: entry.anchor.to_string(),
                    expected: n,
                    actual: entry.chains.len(),
                });
            }
            if let Some(f) = entry.chains.iter().find(|f| f.dim() != dim) {
                return Err(BlendError::DimensionMismatch {
                    expected: dim,
                    actual: f.dim(),
                });
            }
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(BlendError::BaseMix(lambda));
        }
        let weights = space.weight_vector(&score)?;
        Ok(Self {
            base,
            anchors,
            score,
            weights,
            mode,
            lambda,
            draw: DrawPolicy::default(),
            dim,
        })
    }

    pub fn with_mode(mut self, mode: BlendMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_draw_policy(mut self, draw: DrawPolicy) -> Self {
        self.draw = draw;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.score.len()
    }

    pub fn mode(&self) -> BlendMode {
        self.mode
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn draw_policy(&self) -> DrawPolicy {
        self.draw
    }

    pub fn score(&self) -> &ScoreVector {
        &self.score
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn base(&self) -> &SharedField {
        &self.base
    }

    pub fn anchors(&self) -> &[AnchorFields] {
        &self.anchors
    }

    /// Inner field evaluations per blended evaluation.
    pub fn evals_per_call(&self) -> u64 {
        inner_evals_per_call(self.mode, self.n())
    }

    /// Affine coefficients of the full-average blend at time `t`.
    pub fn affine(&self, t: f64) -> Result<AffineCoefficients, BlendError> {
        let coeffs = |f: &SharedField, what: &dyn Fn() -> String| {
            f.affine(t).ok_or_else(|| BlendError::NotAffine(what()))
        };
        let mut total = AffineCoefficients::zeros(self.dim);
        total.add_scaled(&coeffs(&self.base, &|| "base".into())?, self.lambda);
        for (entry, &w) in self.anchors.iter().zip(&self.weights) {
            let scale = (1.0 - self.lambda) * w / entry.chains.len() as f64;
            for (j, f) in entry.chains.iter().enumerate() {
                let c = coeffs(f, &|| format!("anchor {} chain {}", entry.anchor, j + 1))?;
                total.add_scaled(&c, scale);
            }
        }
        Ok(total)
    }
}

/// `2^n + 1` for stochastic mode, `n 2^n + 1` for full-average mode.
pub fn inner_evals_per_call(mode: BlendMode, n: usize) -> u64 {
    let anchors = 1u64 << n;
    match mode {
        BlendMode::Stochastic => anchors + 1,
        BlendMode::FullAverage => n as u64 * anchors + 1,
    }
}

/// A blend bound to a seed, with its own draw stream and evaluation counter.
///
/// Not meant to be shared between threads; give each trajectory its own.
pub struct BlendedField {
    spec: Arc<BlendSpec>,
    seed: u64,
    calls: u64,
    inner_evals: u64,
    step: u64,
    acc: Vec<f64>,
    tmp: Vec<f64>,
}

pub fn make_blended_field(spec: Arc<BlendSpec>, seed: u64) -> BlendedField {
    let dim = spec.dim;
    BlendedField {
        spec,
        seed,
        calls: 0,
        inner_evals: 0,
        step: 0,
        acc: vec![0.0; dim],
        tmp: vec![0.0; dim],
    }
}

impl BlendedField {
    pub fn spec(&self) -> &BlendSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    /// Number of blended evaluations so far.
    pub fn calls(&self) -> u64 {
        self.calls
    }

    /// Number of inner field evaluations so far.
    pub fn eval_counter(&self) -> u64 {
        self.inner_evals
    }

    /// Marks the start of solver step `step` (used by [`DrawPolicy::PerStep`]).
    pub fn begin_step(&mut self, step: u64) {
        self.step = step;
    }

    /// Chain index drawn for anchor `anchor_pos` (0-based) at the current ordinal.
    fn draw(&self, anchor_pos: usize, chains: usize) -> usize {
        let ordinal = match self.spec.draw {
            DrawPolicy::PerEvaluation => self.calls,
            DrawPolicy::PerStep => self.step,
        };
        stream::uniform_index(&[self.seed, ordinal, anchor_pos as u64], chains)
    }

    pub fn eval(&mut self, x: &[f64], t: f64) -> Result<Vec<f64>, BlendError> {
        if x.len() != self.spec.dim {
            return Err(BlendError::DimensionMismatch {
                expected: self.spec.dim,
                actual: x.len(),
            });
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(BlendError::Time(t));
        }
        let mut out = vec![0.0; x.len()];
        self.eval_into(x, t, &mut out);
        Ok(out)
    }

    /// Unchecked evaluation; `x` and `out` must have the field's dimension.
    pub fn eval_into(&mut self, x: &[f64], t: f64, out: &mut [f64]) {
        let spec = Arc::clone(&self.spec);
        self.acc.iter_mut().for_each(|a| *a = 0.0);
        for (pos, (entry, &w)) in spec.anchors.iter().zip(&spec.weights).enumerate() {
            match spec.mode {
                BlendMode::Stochastic => {
                    let j = self.draw(pos, entry.chains.len());
                    entry.chains[j].eval_into(x, t, &mut self.tmp);
                    self.inner_evals += 1;
                    for (a, v) in self.acc.iter_mut().zip(&self.tmp) {
                        *a += w * v;
                    }
                }
                BlendMode::FullAverage => {
                    let scale = w / entry.chains.len() as f64;
                    for f in &entry.chains {
                        f.eval_into(x, t, &mut self.tmp);
                        self.inner_evals += 1;
                        for (a, v) in self.acc.iter_mut().zip(&self.tmp) {
                            *a += scale * v;
                        }
                    }
                }
            }
        }
        spec.base.eval_into(x, t, &mut self.tmp);
        self.inner_evals += 1;
        let lambda = spec.lambda;
        for ((o, a), b) in out.iter_mut().zip(&self.acc).zip(&self.tmp) {
            *o = (1.0 - lambda) * a + lambda * b;
        }
        self.calls += 1;
    }
}

/// Result of [`expected_field_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct FieldCheck {
    pub stochastic_mean: Vec<f64>,
    pub full_value: Vec<f64>,
    /// Per-coordinate standard error; absent with a single draw.
    pub std_error: Option<Vec<f64>>,
    pub draws: usize,
}

/// Monte-Carlo mean of the stochastic blend at `(x, t)` against the
/// full-average value.
pub fn expected_field_check(
    spec: &BlendSpec,
    x: &[f64],
    t: f64,
    num_draws: usize,
    seed: u64,
) -> Result<FieldCheck, BlendError> {
    if num_draws == 0 {
        return Err(BlendError::TooFewDraws("expected_field_check"));
    }
    let full_spec = Arc::new(spec.clone().with_mode(BlendMode::FullAverage));
    let full_value = make_blended_field(full_spec, seed).eval(x, t)?;
    let stoch_spec = Arc::new(
        spec.clone()
            .with_mode(BlendMode::Stochastic)
            .with_draw_policy(DrawPolicy::PerEvaluation),
    );
    let mut field = make_blended_field(stoch_spec, seed);
    let d = x.len();
    let mut sum = vec![0.0; d];
    let mut sumsq = vec![0.0; d];
    let mut draw = vec![0.0; d];
    for _ in 0..num_draws {
        field.eval_into(x, t, &mut draw);
        for i in 0..d {
            sum[i] += draw[i];
            sumsq[i] += draw[i] * draw[i];
        }
    }
    let nd = num_draws as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nd).collect();
    let std_error = (num_draws >= 2).then(|| {
        (0..d)
            .map(|i| {
                let var = ((sumsq[i] - nd * mean[i] * mean[i]) / (nd - 1.0)).max(0.0);
                (var / nd).sqrt()
            })
            .collect()
    });
    Ok(FieldCheck {
        stochastic_mean: mean,
        full_value,
        std_error,
        draws: num_draws,
    })
}
