//! Closed-form stand-in for a text-conditioned velocity predictor.
//!
//! A prompt binds to an isotropic Gaussian mixture in a small latent space.
//! Along the linear path `x_t = (1 - t) x0 + t x1`, with `x0 ~ N(0, I)` and
//! `x1 ~ N(mu, s2 I)`, the pair `(x1 - x0, x_t)` is jointly Gaussian and the
//! marginal velocity is exactly affine in `x`:
//!
//! ```text
//! v(x, t) = mu + kappa(t) (x - t mu),
//! kappa(t) = (t s2 - (1 - t)) / ((1 - t)^2 + t^2 s2)
//! ```
//!
//! For a mixture, the per-component fields are combined with the posterior
//! responsibilities of `x` under each component's law of `x_t`,
//! `N(t mu_m, ((1 - t)^2 + t^2 s2_m) I)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cogspace::CognitiveSpace;
use crate::polarize::parse_template;

/// Smallest admissible component variance.
pub const MIN_VARIANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SemanticsError {
    #[error("time {0} is outside [0, 1]")]
    TimeOutOfRange(f64),
    #[error("variance {0} is below the floor {MIN_VARIANCE}")]
    VarianceTooSmall(f64),
    #[error("vector of length {actual} where {expected} was expected")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid target distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid semantic model: {0}")]
    InvalidModel(String),
    #[error("cannot bind prompt {prompt:?}: {reason}")]
    Unbindable { prompt: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variance: f64,
}

/// Isotropic Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct TargetDistribution {
    components: Vec<MixtureComponent>,
    dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDistribution {
    components: Vec<MixtureComponent>,
}

impl TryFrom<RawDistribution> for TargetDistribution {
    type Error = SemanticsError;
    fn try_from(raw: RawDistribution) -> Result<Self, Self::Error> {
        Self::mixture(raw.components)
    }
}

impl From<TargetDistribution> for RawDistribution {
    fn from(d: TargetDistribution) -> Self {
        Self {
            components: d.components,
        }
    }
}

impl TargetDistribution {
    pub fn gaussian(mean: Vec<f64>, variance: f64) -> Result<Self, SemanticsError> {
        Self::mixture(vec![MixtureComponent {
            weight: 1.0,
            mean,
            variance,
        }])
    }

    pub fn mixture(components: Vec<MixtureComponent>) -> Result<Self, SemanticsError> {
        let invalid = |m: String| Err(SemanticsError::InvalidDistribution(m));
        let Some(first) = components.first() else {
            return invalid("no components".into());
        };
        let dim = first.mean.len();
        if dim == 0 {
            return invalid("zero-dimensional mean".into());
        }
        for (i, c) in components.iter().enumerate() {
            if c.mean.len() != dim {
                return invalid(format!("component {i} has dimension {}, expected {dim}", c.mean.len()));
            }
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return invalid(format!("component {i} weight {} is not positive", c.weight));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return invalid(format!("component {i} mean is not finite"));
            }
            if !(c.variance >= MIN_VARIANCE) || !c.variance.is_finite() {
                return Err(SemanticsError::VarianceTooSmall(c.variance));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("weights sum to {total}, not 1"));
        }
        Ok(Self { components, dim })
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_gaussian(&self) -> bool {
        self.components.len() == 1
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for c in &self.components {
            for (acc, mu) in m.iter_mut().zip(&c.mean) {
                *acc += c.weight * mu;
            }
        }
        m
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let m = DVector::from_vec(self.mean());
        let mut cov = DMatrix::zeros(self.dim, self.dim);
        for c in &self.components {
            let mu = DVector::from_column_slice(&c.mean);
            cov += (DMatrix::identity(self.dim, self.dim) * c.variance + &mu * mu.transpose()) * c.weight;
        }
        cov - &m * m.transpose()
    }

    /// Posterior probabilities of each component given `x_t = x`.
    pub fn responsibilities(&self, x: &[f64], t: f64) -> Vec<f64> {
        let d = self.dim as f64;
        let logs: Vec<f64> = self
            .components
            .iter()
            .map(|c| {
                let s2 = marginal_variance(c.variance, t);
                let sq: f64 = x
                    .iter()
                    .zip(&c.mean)
                    .map(|(xi, mi)| (xi - t * mi).powi(2))
                    .sum();
                c.weight.ln() - 0.5 * d * s2.ln() - 0.5 * sq / s2
            })
            .collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }
}

/// Variance of `x_t` for a component of variance `s2`.
#[inline]
pub fn marginal_variance(s2: f64, t: f64) -> f64 {
    (1.0 - t).powi(2) + t * t * s2
}

#[inline]
pub fn kappa(s2: f64, t: f64) -> f64 {
    (t * s2 - (1.0 - t)) / marginal_variance(s2, t)
}

fn check_time(t: f64) -> Result<(), SemanticsError> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(SemanticsError::TimeOutOfRange(t))
    }
}

#[inline]
fn gaussian_into(mean: &[f64], s2: f64, x: &[f64], t: f64, out: &mut [f64]) {
    let k = kappa(s2, t);
    for ((o, &m), &xi) in out.iter_mut().zip(mean).zip(x) {
        *o = m + k * (xi - t * m);
    }
}

/// Exact marginal velocity toward `N(mean, variance I)`.
pub fn gaussian_field(mean: &[f64], variance: f64, x: &[f64], t: f64) -> Result<Vec<f64>, SemanticsError> {
    check_time(t)?;
    if !(variance >= MIN_VARIANCE) {
        return Err(SemanticsError::VarianceTooSmall(variance));
    }
    if x.len() != mean.len() {
        return Err(SemanticsError::DimensionMismatch {
            expected: mean.len(),
            actual: x.len(),
        });
    }
    let mut out = vec![0.0; x.len()];
    gaussian_into(mean, variance, x, t, &mut out);
    Ok(out)
}

/// Exact marginal velocity toward a Gaussian mixture.
pub fn mixture_field(dist: &TargetDistribution, x: &[f64], t: f64) -> Result<Vec<f64>, SemanticsError> {
    check_time(t)?;
    if x.len() != dist.dim() {
        return Err(SemanticsError::DimensionMismatch {
            expected: dist.dim(),
            actual: x.len(),
        });
    }
    Ok(dist.eval(x, t))
}

/// `v(x, t) = A(t) x + b(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineCoefficients {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineCoefficients {
    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(dim, dim),
            offset: DVector::zeros(dim),
        }
    }

    pub fn add_scaled(&mut self, other: &AffineCoefficients, scale: f64) {
        self.matrix += &other.matrix * scale;
        self.offset += &other.offset * scale;
    }
}

/// A time-dependent velocity field on `R^D`.
pub trait VelocityField: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes `v(x, t)` into `out`. Callers guarantee matching lengths and `t` in `[0, 1]`.
    fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]);

    fn eval(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, t, &mut out);
        out
    }

    /// Coefficients at time `t` when the field is affine in `x`.
    fn affine(&self, _t: f64) -> Option<AffineCoefficients> {
        None
    }
}

impl VelocityField for TargetDistribution {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        if let [c] = self.components.as_slice() {
            gaussian_into(&c.mean, c.variance, x, t, out);
            return;
        }
        let r = self.responsibilities(x, t);
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut tmp = vec![0.0; self.dim];
        for (c, rm) in self.components.iter().zip(r) {
            gaussian_into(&c.mean, c.variance, x, t, &mut tmp);
            for (o, v) in out.iter_mut().zip(&tmp) {
                *o += rm * v;
            }
        }
    }

    fn affine(&self, t: f64) -> Option<AffineCoefficients> {
        let [c] = self.components.as_slice() else {
            return None;
        };
        let k = kappa(c.variance, t);
        Some(AffineCoefficients {
            matrix: DMatrix::identity(self.dim, self.dim) * k,
            offset: DVector::from_iterator(self.dim, c.mean.iter().map(|m| m * (1.0 - t * k))),
        })
    }
}

/// Field given by an arbitrary closure.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], f64, &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> VelocityField for FnField<F>
where
    F: Fn(&[f64], f64, &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (self.f)(x, t, out)
    }
}

/// Affine field given by its coefficient function.
pub struct AffineField<F> {
    dim: usize,
    coefficients: F,
}

impl<F> AffineField<F>
where
    F: Fn(f64) -> AffineCoefficients + Send + Sync,
{
    pub fn new(dim: usize, coefficients: F) -> Self {
        Self { dim, coefficients }
    }
}

impl<F> VelocityField for AffineField<F>
where
    F: Fn(f64) -> AffineCoefficients + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let c = (self.coefficients)(t);
        let v = &c.matrix * DVector::from_column_slice(x) + &c.offset;
        out.copy_from_slice(v.as_slice());
    }

    fn affine(&self, t: f64) -> Option<AffineCoefficients> {
        Some((self.coefficients)(t))
    }
}

/// Parameters of a [`SemanticModel`] as they appear in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SemanticConfig {
    /// Latent dimensionality; `max(2, n)` when absent.
    pub latent_dim: Option<usize>,
    /// Mean bound to the untagged base prompt; zeros when absent.
    pub base_mean: Option<Vec<f64>>,
    /// One unit vector per cognitive dimension; coordinate axes when absent.
    pub directions: Option<Vec<Vec<f64>>>,
    /// Per-dimension shift of the target mean at full polarization.
    pub effect_magnitudes: Option<Vec<f64>>,
    pub default_effect: f64,
    /// Position bias of later rewrites.
    pub position_bias: f64,
    /// Variance of template-bound targets.
    pub variance: f64,
    /// Exact prompt strings bound to explicit distributions.
    pub bindings: BTreeMap<String, TargetDistribution>,
}

impl Default for SemanticConfig {
    fn default() -> Self {
        Self {
            latent_dim: None,
            base_mean: None,
            directions: None,
            effect_magnitudes: None,
            default_effect: 2.0,
            position_bias: 0.0,
            variance: 0.25,
            bindings: BTreeMap::new(),
        }
    }
}

/// Binds prompts to target distributions.
///
/// A template prompt `base «d_i:±»...` binds to a single Gaussian with mean
/// `base_mean + sum_i sign_i * magnitude_i * omega(pos_i) * direction_i`,
/// where `pos_i` is the 1-based position of the tag and
/// `omega(pos) = 1 + bias * (pos - (n + 1) / 2) / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticModel {
    space: CognitiveSpace,
    latent_dim: usize,
    base_mean: Vec<f64>,
    directions: Vec<Vec<f64>>,
    magnitudes: Vec<f64>,
    position_bias: f64,
    variance: f64,
    base_prompt: Option<String>,
    bindings: BTreeMap<String, TargetDistribution>,
}

impl SemanticModel {
    pub fn new(space: &CognitiveSpace, config: &SemanticConfig) -> Result<Self, SemanticsError> {
        let n = space.n();
        let bad = |m: String| Err(SemanticsError::InvalidModel(m));
        let latent_dim = config.latent_dim.unwrap_or(n.max(2));
        if latent_dim < 2 {
            return bad(format!("latent_dim must be at least 2, got {latent_dim}"));
        }
        let base_mean = config.base_mean.clone().unwrap_or_else(|| vec![0.0; latent_dim]);
        if base_mean.len() != latent_dim {
            return bad(format!("base_mean has length {}, expected {latent_dim}", base_mean.len()));
        }
        let directions = match &config.directions {
            Some(d) => d.clone(),
            None => {
                if n > latent_dim {
                    return bad(format!("cannot place {n} axis directions in {latent_dim} dimensions"));
                }
                (0..n)
                    .map(|i| (0..latent_dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                    .collect()
            }
        };
        if directions.len() != n {
            return bad(format!("{} directions for {n} dimensions", directions.len()));
        }
        for (i, d) in directions.iter().enumerate() {
            if d.len() != latent_dim {
                return bad(format!("direction {} has length {}, expected {latent_dim}", i + 1, d.len()));
            }
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return bad(format!("direction {} has norm {norm}, expected 1", i + 1));
            }
        }
        let magnitudes = config
            .effect_magnitudes
            .clone()
            .unwrap_or_else(|| vec![config.default_effect; n]);
        if magnitudes.len() != n || magnitudes.iter().any(|m| !(*m > 0.0)) {
            return bad(format!("need {n} positive effect magnitudes, got {magnitudes:?}"));
        }
        if !(config.position_bias >= 0.0) {
            return bad(format!("position_bias must be >= 0, got {}", config.position_bias));
        }
        if !(config.variance >= MIN_VARIANCE) {
            return Err(SemanticsError::VarianceTooSmall(config.variance));
        }
        for (prompt, dist) in &config.bindings {
            if dist.dim() != latent_dim {
                return bad(format!("binding for {prompt:?} has dimension {}, expected {latent_dim}", dist.dim()));
            }
        }
        Ok(Self {
            space: space.clone(),
            latent_dim,
            base_mean,
            directions,
            magnitudes,
            position_bias: config.position_bias,
            variance: config.variance,
            base_prompt: None,
            bindings: config.bindings.clone(),
        })
    }

    /// Restricts template binding to prompts whose base text is `prompt`.
    pub fn with_base_prompt(mut self, prompt: impl Into<String>) -> Self {
        self.base_prompt = Some(prompt.into());
        self
    }

    pub fn with_position_bias(mut self, bias: f64) -> Self {
        self.position_bias = bias;
        self
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn base_mean(&self) -> &[f64] {
        &self.base_mean
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn position_bias(&self) -> f64 {
        self.position_bias
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn space(&self) -> &CognitiveSpace {
        &self.space
    }

    /// `omega(pos)` for a 1-based tag position.
    pub fn position_weight(&self, position: usize) -> f64 {
        let n = self.space.n() as f64;
        1.0 + self.position_bias * (position as f64 - (n + 1.0) / 2.0) / n
    }

    pub fn bind(&self, prompt: &str) -> Result<TargetDistribution, SemanticsError> {
        if let Some(d) = self.bindings.get(prompt) {
            return Ok(d.clone());
        }
        let unbindable = |reason: String| SemanticsError::Unbindable {
            prompt: prompt.to_owned(),
            reason,
        };
        let (base, tags) = parse_template(prompt);
        if let Some(expected) = &self.base_prompt {
            if base != expected.trim_end() {
                return Err(unbindable(format!(
                    "not a template rewrite of {expected:?} and no explicit binding"
                )));
            }
        }
        let mut mean = self.base_mean.clone();
        let mut seen = vec![false; self.space.n()];
        for (pos, (name, pole)) in tags.iter().enumerate() {
            let i = self
                .space
                .position_of(name)
                .ok_or_else(|| unbindable(format!("unknown dimension tag `{name}`")))?;
            if std::mem::replace(&mut seen[i], true) {
                return Err(unbindable(format!("dimension `{name}` tagged twice")));
            }
            let scale = pole.sign() * self.magnitudes[i] * self.position_weight(pos + 1);
            for (m, d) in mean.iter_mut().zip(&self.directions[i]) {
                *m += scale * d;
            }
        }
        TargetDistribution::gaussian(mean, self.variance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cogspace::CognitiveSpace;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn field_endpoints() {
        let v = gaussian_field(&[2.0, 0.0], 0.5, &[0.0, 0.0], 0.0).unwrap();
        assert!(close(&v, &[2.0, 0.0], 1e-15));
        let v = gaussian_field(&[2.0, -1.0], 0.5, &[3.0, 1.0], 1.0).unwrap();
        assert!(close(&v, &[3.0, 1.0], 1e-15));
        let v = gaussian_field(&[0.0, 0.0], 1.0, &[0.7, -4.0], 0.5).unwrap();
        assert!(close(&v, &[0.0, 0.0], 1e-15));
    }

    #[test]
    fn field_contract_errors() {
        assert_eq!(
            gaussian_field(&[0.0], 1.0, &[0.0], 1.5).unwrap_err(),
            SemanticsError::TimeOutOfRange(1.5)
        );
        assert!(matches!(
            gaussian_field(&[0.0], 1e-5, &[0.0], 0.5),
            Err(SemanticsError::VarianceTooSmall(_))
        ));
        assert!(matches!(
            gaussian_field(&[0.0], 1.0, &[0.0, 1.0], 0.5),
            Err(SemanticsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn field_is_affine_in_x() {
        let (m, s2, t) = ([1.0, -2.0], 0.3, 0.37);
        let a = [0.2, 0.5];
        let b = [-1.0, 2.0];
        let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        let va = gaussian_field(&m, s2, &a, t).unwrap();
        let vb = gaussian_field(&m, s2, &b, t).unwrap();
        let vm = gaussian_field(&m, s2, &mid, t).unwrap();
        for i in 0..2 {
            assert!((vm[i] - 0.5 * (va[i] + vb[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn single_component_mixture_matches_gaussian() {
        let d = TargetDistribution::gaussian(vec![1.5, -0.5], 0.2).unwrap();
        for &t in &[0.0, 0.3, 0.9, 1.0] {
            let x = [0.4, 1.1];
            assert_eq!(
                mixture_field(&d, &x, t).unwrap(),
                gaussian_field(&[1.5, -0.5], 0.2, &x, t).unwrap()
            );
        }
    }

    fn two_bumps() -> TargetDistribution {
        TargetDistribution::mixture(vec![
            MixtureComponent { weight: 0.5, mean: vec![3.0, 0.0], variance: 0.2 },
            MixtureComponent { weight: 0.5, mean: vec![-3.0, 0.0], variance: 0.2 },
        ])
        .unwrap()
    }

    #[test]
    fn symmetric_mixture_has_zero_axial_velocity_at_origin() {
        let d = two_bumps();
        for &t in &[0.1, 0.5, 0.9] {
            let v = mixture_field(&d, &[0.0, 0.0], t).unwrap();
            assert!(v[0].abs() < 1e-12, "{v:?}");
        }
    }

    #[test]
    fn responsibilities_saturate_deep_in_a_basin() {
        let d = two_bumps();
        let x = [2.4, 0.1];
        let t = 0.8;
        // independent evaluation of the two x_t densities
        let s2 = (0.2f64).powi(2) + 0.64 * 0.2;
        let dens = |mu: f64| {
            let sq = (x[0] - t * mu).powi(2) + (x[1]).powi(2);
            (-(sq) / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2)
        };
        let r1 = dens(3.0) / (dens(3.0) + dens(-3.0));
        let r = d.responsibilities(&x, t);
        assert!((r[0] - r1).abs() < 1e-12);
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let v = mixture_field(&d, &x, t).unwrap();
        let g = gaussian_field(&[3.0, 0.0], 0.2, &x, t).unwrap();
        assert!(close(&v, &g, 1e-6), "{v:?} vs {g:?}");
    }

    #[test]
    fn distribution_validation() {
        assert!(TargetDistribution::gaussian(vec![], 1.0).is_err());
        assert!(matches!(
            TargetDistribution::gaussian(vec![0.0], 1e-6),
            Err(SemanticsError::VarianceTooSmall(_))
        ));
        let bad_weights = TargetDistribution::mixture(vec![
            MixtureComponent { weight: 0.5, mean: vec![0.0], variance: 1.0 },
            MixtureComponent { weight: 0.4, mean: vec![1.0], variance: 1.0 },
        ]);
        assert!(bad_weights.is_err());
        let json = r#"{"components":[{"weight":1.0,"mean":[1,2],"variance":0.5}]}"#;
        let d: TargetDistribution = serde_json::from_str(json).unwrap();
        assert_eq!(d.mean(), vec![1.0, 2.0]);
        assert_eq!(d.covariance(), DMatrix::identity(2, 2) * 0.5);
    }

    #[test]
    fn mixture_moments() {
        let d = two_bumps();
        assert_eq!(d.mean(), vec![0.0, 0.0]);
        let c = d.covariance();
        assert!((c[(0, 0)] - 9.2).abs() < 1e-12);
        assert!((c[(1, 1)] - 0.2).abs() < 1e-12);
    }

    fn model(n: usize, bias: f64) -> SemanticModel {
        let space = CognitiveSpace::numbered(n).unwrap();
        let cfg = SemanticConfig {
            position_bias: bias,
            ..SemanticConfig::default()
        };
        SemanticModel::new(&space, &cfg).unwrap()
    }

    #[test]
    fn tag_order_irrelevant_without_bias() {
        let m = model(2, 0.0);
        assert_eq!(
            m.bind("p «d1:+»«d2:-»").unwrap(),
            m.bind("p «d2:-»«d1:+»").unwrap()
        );
        assert_eq!(m.bind("p «d1:+»«d2:-»").unwrap().mean(), vec![2.0, -2.0]);
        assert_eq!(m.bind("p").unwrap().mean(), vec![0.0, 0.0]);
    }

    #[test]
    fn position_weights_with_bias() {
        let m = model(2, 0.5);
        assert_eq!(m.position_weight(1), 0.875);
        assert_eq!(m.position_weight(2), 1.125);
        let d = m.bind("p «d1:+»«d2:+»").unwrap();
        assert_eq!(d.mean(), vec![2.0 * 0.875, 2.0 * 1.125]);
        assert!((d.mean()[1] / d.mean()[0] - 1.125 / 0.875).abs() < 1e-15);
    }

    #[test]
    fn explicit_bindings_win_and_free_text_fails() {
        let space = CognitiveSpace::numbered(2).unwrap();
        let target = TargetDistribution::gaussian(vec![9.0, 9.0], 1.0).unwrap();
        let cfg = SemanticConfig {
            bindings: [("a sunny valley".to_string(), target.clone())].into(),
            ..SemanticConfig::default()
        };
        let m = SemanticModel::new(&space, &cfg).unwrap().with_base_prompt("a valley");
        assert_eq!(m.bind("a sunny valley").unwrap(), target);
        assert!(m.bind("a valley «d2:+»").is_ok());
        let err = m.bind("a gloomy valley").unwrap_err();
        assert!(matches!(err, SemanticsError::Unbindable { .. }));
        assert!(m.bind("a valley «d9:+»").is_err());
    }

    #[test]
    fn model_validation() {
        let space = CognitiveSpace::numbered(2).unwrap();
        let cfg = SemanticConfig {
            directions: Some(vec![vec![1.0, 1.0], vec![0.0, 1.0]]),
            ..SemanticConfig::default()
        };
        assert!(SemanticModel::new(&space, &cfg).is_err());
        let cfg = SemanticConfig {
            latent_dim: Some(1),
            ..SemanticConfig::default()
        };
        assert!(SemanticModel::new(&space, &cfg).is_err());
        assert_eq!(model(3, 0.0).latent_dim(), 3);
        assert_eq!(model(1, 0.0).latent_dim(), 2);
    }

    #[test]
    fn affine_coefficients_reproduce_field() {
        let d = TargetDistribution::gaussian(vec![1.0, -3.0], 0.4).unwrap();
        let x = [0.3, 0.9];
        for &t in &[0.0, 0.25, 0.8, 1.0] {
            let c = d.affine(t).unwrap();
            let v = &c.matrix * DVector::from_column_slice(&x) + &c.offset;
            assert!(close(v.as_slice(), &d.eval(&x, t), 1e-14));
        }
        assert!(two_bumps().affine(0.5).is_none());
    }
}
