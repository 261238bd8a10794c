//! Probability-flow integration from noise (`t = 0`) to data (`t = 1`).
//!
//! Fixed-step explicit solvers on the uniform grid `t_i = i / N`, a batch
//! generator that runs the full polarize/bind/blend/integrate/decode
//! pipeline, and a moment-ODE reference for affine blends.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blend::{
    make_blended_field, AnchorFields, BlendError, BlendMode, BlendSpec, BlendedField, DrawPolicy,
    SharedField,
};
use crate::cogspace::{CognitiveAnchor, CognitiveSpace, ScoreVector};
use crate::output::write_files_atomically;
use crate::polarize::{build_all_sets, PolarizationCache, PolarizeError, PolarizedPromptSet, PolarizerBackend};
use crate::semantics::{AffineCoefficients, SemanticModel, SemanticsError, TargetDistribution, VelocityField};
use crate::stream;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("state became non-finite at step {step}")]
    Divergence { step: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Polarize(#[from] PolarizeError),
    #[error(transparent)]
    Binding(#[from] SemanticsError),
    #[error(transparent)]
    Blend(#[from] BlendError),
    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<FlowError>,
    },
    #[error("writing sample batch: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Euler,
    Midpoint,
    #[default]
    Rk4,
}

impl Solver {
    /// Field evaluations per step.
    pub fn stages(self) -> usize {
        match self {
            Solver::Euler => 1,
            Solver::Midpoint => 2,
            Solver::Rk4 => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegrationConfig {
    pub solver: Solver,
    pub steps: usize,
    pub record_trajectory: bool,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            solver: Solver::Rk4,
            steps: 100,
            record_trajectory: false,
        }
    }
}

impl IntegrationConfig {
    pub fn new(solver: Solver, steps: usize) -> Self {
        Self {
            solver,
            steps,
            record_trajectory: false,
        }
    }

    fn validate(&self) -> Result<(), FlowError> {
        if self.steps == 0 {
            return Err(FlowError::Config("steps must be positive".into()));
        }
        Ok(())
    }
}

/// Something the integrator can step through.
pub trait Dynamics {
    fn dim(&self) -> usize;
    fn velocity(&mut self, x: &[f64], t: f64, out: &mut [f64]);
    fn begin_step(&mut self, _step: usize) {}
}

struct Pure<'a, F: ?Sized>(&'a F);

impl<F: VelocityField + ?Sized> Dynamics for Pure<'_, F> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn velocity(&mut self, x: &[f64], t: f64, out: &mut [f64]) {
        self.0.eval_into(x, t, out)
    }
}

impl Dynamics for BlendedField {
    fn dim(&self) -> usize {
        BlendedField::dim(self)
    }

    fn velocity(&mut self, x: &[f64], t: f64, out: &mut [f64]) {
        self.eval_into(x, t, out)
    }

    fn begin_step(&mut self, step: usize) {
        BlendedField::begin_step(self, step as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Integration {
    pub endpoint: Vec<f64>,
    /// `steps + 1` states, the first being `x0`.
    pub trajectory: Option<Vec<Vec<f64>>>,
}

/// Integrates a pure field from `x0`.
pub fn integrate(field: &dyn VelocityField, x0: &[f64], config: &IntegrationConfig) -> Result<Integration, FlowError> {
    integrate_dynamics(&mut Pure(field), x0, config)
}

pub fn integrate_dynamics<D: Dynamics + ?Sized>(
    dynamics: &mut D,
    x0: &[f64],
    config: &IntegrationConfig,
) -> Result<Integration, FlowError> {
    config.validate()?;
    let d = dynamics.dim();
    if x0.len() != d {
        return Err(FlowError::Config(format!(
            "initial state has dimension {}, field has {d}",
            x0.len()
        )));
    }
    let n = config.steps;
    let h = 1.0 / n as f64;
    let mut x = x0.to_vec();
    let mut trajectory = config.record_trajectory.then(|| {
        let mut t = Vec::with_capacity(n + 1);
        t.push(x.clone());
        t
    });
    let mut k1 = vec![0.0; d];
    let mut k2 = vec![0.0; d];
    let mut k3 = vec![0.0; d];
    let mut k4 = vec![0.0; d];
    let mut probe = vec![0.0; d];
    for step in 0..n {
        let t = step as f64 * h;
        dynamics.begin_step(step);
        match config.solver {
            Solver::Euler => {
                dynamics.velocity(&x, t, &mut k1);
                for (xi, ki) in x.iter_mut().zip(&k1) {
                    *xi += h * ki;
                }
            }
            Solver::Midpoint => {
                dynamics.velocity(&x, t, &mut k1);
                for i in 0..d {
                    probe[i] = x[i] + 0.5 * h * k1[i];
                }
                dynamics.velocity(&probe, t + 0.5 * h, &mut k2);
                for (xi, ki) in x.iter_mut().zip(&k2) {
                    *xi += h * ki;
                }
            }
            Solver::Rk4 => {
                dynamics.velocity(&x, t, &mut k1);
                for i in 0..d {
                    probe[i] = x[i] + 0.5 * h * k1[i];
                }
                dynamics.velocity(&probe, t + 0.5 * h, &mut k2);
                for i in 0..d {
                    probe[i] = x[i] + 0.5 * h * k2[i];
                }
                dynamics.velocity(&probe, t + 0.5 * h, &mut k3);
                for i in 0..d {
                    probe[i] = x[i] + h * k3[i];
                }
                // the last stage sits exactly on the next grid time
                let t_next = (step + 1) as f64 * h;
                dynamics.velocity(&probe, t_next.min(1.0), &mut k4);
                for i in 0..d {
                    x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::Divergence { step: step + 1 });
        }
        if let Some(tr) = trajectory.as_mut() {
            tr.push(x.clone());
        }
    }
    Ok(Integration {
        endpoint: x,
        trajectory,
    })
}

/// Mean and covariance of the transported Gaussian on the time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPath {
    pub times: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
}

impl MomentPath {
    pub fn final_mean(&self) -> &DVector<f64> {
        self.means.last().expect("non-empty path")
    }

    pub fn final_covariance(&self) -> &DMatrix<f64> {
        self.covariances.last().expect("non-empty path")
    }
}

/// Integrates `dm/dt = A m + b`, `dC/dt = A C + C A^T` with RK4 over `steps` steps.
pub fn integrate_moments<F, E>(
    coefficients: F,
    mean0: DVector<f64>,
    cov0: DMatrix<f64>,
    steps: usize,
) -> Result<MomentPath, E>
where
    F: Fn(f64) -> Result<AffineCoefficients, E>,
{
    let n = steps.max(1);
    let h = 1.0 / n as f64;
    let rhs = |t: f64, m: &DVector<f64>, c: &DMatrix<f64>| -> Result<(DVector<f64>, DMatrix<f64>), E> {
        let AffineCoefficients { matrix: a, offset: b } = coefficients(t)?;
        let dm = &a * m + b;
        let ac = &a * c;
        let dc = &ac + ac.transpose();
        Ok((dm, dc))
    };
    let mut m = mean0;
    let mut c = cov0;
    let mut path = MomentPath {
        times: vec![0.0],
        means: vec![m.clone()],
        covariances: vec![c.clone()],
    };
    for step in 0..n {
        let t = step as f64 * h;
        let t_half = t + 0.5 * h;
        let t_next = ((step + 1) as f64 * h).min(1.0);
        let (m1, c1) = rhs(t, &m, &c)?;
        let (m2, c2) = rhs(t_half, &(&m + &m1 * (0.5 * h)), &(&c + &c1 * (0.5 * h)))?;
        let (m3, c3) = rhs(t_half, &(&m + &m2 * (0.5 * h)), &(&c + &c2 * (0.5 * h)))?;
        let (m4, c4) = rhs(t_next, &(&m + &m3 * h), &(&c + &c3 * h))?;
        m += (m1 + m2 * 2.0 + m3 * 2.0 + m4) * (h / 6.0);
        c += (c1 + c2 * 2.0 + c3 * 2.0 + c4) * (h / 6.0);
        path.times.push(t_next);
        path.means.push(m.clone());
        path.covariances.push(c.clone());
    }
    Ok(path)
}

/// Moment reference for a full-average blend started from `N(0, I)`.
pub fn moment_reference(spec: &BlendSpec, steps: usize) -> Result<MomentPath, FlowError> {
    if spec.mode() != BlendMode::FullAverage {
        return Err(FlowError::Config(
            "moment reference needs a full-average blend".into(),
        ));
    }
    let d = spec.dim();
    integrate_moments(|t| spec.affine(t), DVector::zeros(d), DMatrix::identity(d, d), steps)
        .map_err(FlowError::from)
}

/// Moment reference for a single affine field started from `N(0, I)`.
pub fn moment_reference_field(field: &dyn VelocityField, steps: usize) -> Result<MomentPath, FlowError> {
    let d = field.dim();
    integrate_moments(
        |t| {
            field
                .affine(t)
                .ok_or_else(|| FlowError::Blend(BlendError::NotAffine("field".into())))
        },
        DVector::zeros(d),
        DMatrix::identity(d, d),
        steps,
    )
}

/// Maps latent endpoints to outputs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Decoder {
    #[default]
    Identity,
    /// `y = matrix x + offset`, `matrix` given row by row.
    Affine { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
}

impl Decoder {
    pub fn validate(&self, dim: usize) -> Result<(), FlowError> {
        if let Decoder::Affine { matrix, offset } = self {
            if matrix.len() != offset.len() || matrix.is_empty() {
                return Err(FlowError::Config(format!(
                    "decoder has {} rows and an offset of length {}",
                    matrix.len(),
                    offset.len()
                )));
            }
            if let Some(row) = matrix.iter().find(|r| r.len() != dim) {
                return Err(FlowError::Config(format!(
                    "decoder row of length {} for latent dimension {dim}",
                    row.len()
                )));
            }
        }
        Ok(())
    }

    pub fn decode(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Decoder::Identity => x.to_vec(),
            Decoder::Affine { matrix, offset } => matrix
                .iter()
                .zip(offset)
                .map(|(row, b)| row.iter().zip(x).map(|(a, xi)| a * xi).sum::<f64>() + b)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationRequest {
    pub base_prompt: String,
    pub score: ScoreVector,
    pub seed: u64,
    pub sample_count: usize,
    pub mode: BlendMode,
    pub lambda: f64,
    pub draw: DrawPolicy,
    pub integration: IntegrationConfig,
    pub decoder: Decoder,
}

/// Everything `generate` needs besides the request itself.
pub struct GenerationContext<'a> {
    pub space: &'a CognitiveSpace,
    pub model: &'a SemanticModel,
    pub backend: &'a dyn PolarizerBackend,
    pub cache: &'a PolarizationCache,
}

/// Bound base and anchor distributions for one base prompt.
#[derive(Debug, Clone)]
pub struct PreparedFields {
    pub base_prompt: String,
    pub base: Arc<TargetDistribution>,
    /// Per anchor in canonical order, one distribution per chain.
    pub anchors: Vec<(CognitiveAnchor, Vec<Arc<TargetDistribution>>)>,
    pub sets: Vec<PolarizedPromptSet>,
}

impl PreparedFields {
    pub fn spec(
        &self,
        space: &CognitiveSpace,
        score: ScoreVector,
        mode: BlendMode,
        lambda: f64,
        draw: DrawPolicy,
    ) -> Result<BlendSpec, BlendError> {
        let anchors = self
            .anchors
            .iter()
            .map(|(anchor, chains)| AnchorFields {
                anchor: anchor.clone(),
                chains: chains.iter().map(|d| Arc::clone(d) as SharedField).collect(),
            })
            .collect();
        Ok(BlendSpec::new(space, self.base.clone(), anchors, score, mode, lambda)?.with_draw_policy(draw))
    }
}

/// Polarizes `base_prompt` for every anchor and binds every chain result.
pub fn prepare_fields(ctx: &GenerationContext<'_>, base_prompt: &str) -> Result<PreparedFields, FlowError> {
    let sets = build_all_sets(ctx.backend, base_prompt, ctx.space, ctx.cache)?;
    let model = ctx.model.clone().with_base_prompt(base_prompt);
    let base = Arc::new(model.bind(base_prompt)?);
    let anchors = sets
        .iter()
        .map(|set| {
            let chains = set
                .results()
                .map(|p| model.bind(p).map(Arc::new))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((set.anchor.clone(), chains))
        })
        .collect::<Result<Vec<_>, SemanticsError>>()?;
    Ok(PreparedFields {
        base_prompt: base_prompt.to_owned(),
        base,
        anchors,
        sets,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMetadata {
    pub seed: u64,
    pub sample_count: usize,
    pub eval_count: u64,
    pub wall_ms: f64,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub endpoints: Vec<Vec<f64>>,
    pub decoded: Vec<Vec<f64>>,
    pub trajectories: Option<Vec<Vec<Vec<f64>>>>,
    pub metadata: BatchMetadata,
}

/// Integrates `count` samples of a blend. Sample `i` draws its noise and its
/// chain choices from streams keyed by `(seed, i)` only.
pub fn sample_spec(
    spec: Arc<BlendSpec>,
    seed: u64,
    count: usize,
    integration: &IntegrationConfig,
    decoder: &Decoder,
) -> Result<SampleBatch, FlowError> {
    if count == 0 {
        return Err(FlowError::Config("sample_count must be at least 1".into()));
    }
    integration.validate()?;
    decoder.validate(spec.dim())?;
    let started = Instant::now();
    let dim = spec.dim();
    let runs = (0..count)
        .into_par_iter()
        .map(|i| {
            let sample_seed = stream::sample_seed(seed, i as u64);
            let x0 = stream::standard_normal(sample_seed, dim);
            let mut field = make_blended_field(Arc::clone(&spec), sample_seed);
            integrate_dynamics(&mut field, &x0, integration)
                .map(|run| (run, field.eval_counter()))
                .map_err(|e| FlowError::Sample {
                    index: i,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let eval_count = runs.iter().map(|(_, c)| c).sum();
    let mut endpoints = Vec::with_capacity(count);
    let mut trajectories = integration.record_trajectory.then(|| Vec::with_capacity(count));
    for (run, _) in runs {
        if let (Some(all), Some(tr)) = (trajectories.as_mut(), run.trajectory) {
            all.push(tr);
        }
        endpoints.push(run.endpoint);
    }
    let decoded = endpoints.iter().map(|x| decoder.decode(x)).collect();
    Ok(SampleBatch {
        endpoints,
        decoded,
        trajectories,
        metadata: BatchMetadata {
            seed,
            sample_count: count,
            eval_count,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            config: serde_json::Value::Null,
        },
    })
}

/// Endpoints of `count` samples pushed through a plain field, with the same
/// per-sample noise streams as [`sample_spec`].
pub fn sample_field(
    field: &dyn VelocityField,
    seed: u64,
    count: usize,
    integration: &IntegrationConfig,
) -> Result<Vec<Vec<f64>>, FlowError> {
    integration.validate()?;
    let dim = field.dim();
    (0..count)
        .into_par_iter()
        .map(|i| {
            let x0 = stream::standard_normal(stream::sample_seed(seed, i as u64), dim);
            integrate(field, &x0, integration)
                .map(|run| run.endpoint)
                .map_err(|e| FlowError::Sample {
                    index: i,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// Runs the whole pipeline for one request.
pub fn generate(request: &GenerationRequest, ctx: &GenerationContext<'_>) -> Result<SampleBatch, FlowError> {
    if request.sample_count == 0 {
        return Err(FlowError::Config("sample_count must be at least 1".into()));
    }
    let prepared = prepare_fields(ctx, &request.base_prompt)?;
    let spec = prepared.spec(
        ctx.space,
        request.score.clone(),
        request.mode,
        request.lambda,
        request.draw,
    )?;
    let mut batch = sample_spec(
        Arc::new(spec),
        request.seed,
        request.sample_count,
        &request.integration,
        &request.decoder,
    )?;
    batch.metadata.config = serde_json::to_value(request).expect("request serializes");
    Ok(batch)
}

/// CSV with header `prefix1..prefixD` and one row per point.
pub fn points_csv(prefix: &str, points: &[Vec<f64>]) -> Vec<u8> {
    let dim = points.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record((1..=dim).map(|i| format!("{prefix}{i}")))
        .expect("in-memory write");
    for p in points {
        w.write_record(p.iter().map(|v| v.to_string()))
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn trajectories_csv(trajectories: &[Vec<Vec<f64>>]) -> Vec<u8> {
    let dim = trajectories
        .first()
        .and_then(|t| t.first())
        .map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["sample".to_string(), "step".to_string(), "t".to_string()];
    header.extend((1..=dim).map(|i| format!("x{i}")));
    w.write_record(&header).expect("in-memory write");
    for (s, tr) in trajectories.iter().enumerate() {
        let steps = tr.len().saturating_sub(1).max(1) as f64;
        for (i, x) in tr.iter().enumerate() {
            let mut row = vec![s.to_string(), i.to_string(), (i as f64 / steps).to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            w.write_record(&row).expect("in-memory write");
        }
    }
    w.into_inner().expect("in-memory flush")
}

impl SampleBatch {
    /// Writes `endpoints.csv`, `decoded.csv`, `metadata.json` and, when
    /// recorded, `trajectories.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), FlowError> {
        let mut files = vec![
            ("endpoints.csv", points_csv("x", &self.endpoints)),
            ("decoded.csv", points_csv("y", &self.decoded)),
            (
                "metadata.json",
                serde_json::to_vec_pretty(&self.metadata).expect("metadata serializes"),
            ),
        ];
        if let Some(tr) = &self.trajectories {
            files.push(("trajectories.csv", trajectories_csv(tr)));
        }
        write_files_atomically(dir, &files)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::FnField;

    fn linear(rate: f64) -> FnField<impl Fn(&[f64], f64, &mut [f64]) + Send + Sync> {
        FnField::new(1, move |x: &[f64], _t: f64, out: &mut [f64]| out[0] = rate * x[0])
    }

    #[test]
    fn euler_hand_steps() {
        let r = integrate(&linear(-1.0), &[1.0], &IntegrationConfig::new(Solver::Euler, 2)).unwrap();
        assert_eq!(r.endpoint, vec![0.25]);
    }

    #[test]
    fn rk4_exponential() {
        let r = integrate(&linear(1.0), &[1.0], &IntegrationConfig::new(Solver::Rk4, 20)).unwrap();
        assert!((r.endpoint[0] - std::f64::consts::E).abs() < 1e-5);
    }

    #[test]
    fn zero_field_is_identity() {
        for solver in [Solver::Euler, Solver::Midpoint, Solver::Rk4] {
            let r = integrate(&linear(0.0), &[0.3], &IntegrationConfig::new(solver, 17)).unwrap();
            assert_eq!(r.endpoint, vec![0.3]);
        }
    }

    #[test]
    fn trajectory_bookkeeping() {
        let cfg = IntegrationConfig {
            record_trajectory: true,
            ..IntegrationConfig::new(Solver::Midpoint, 9)
        };
        let r = integrate(&linear(0.7), &[1.5], &cfg).unwrap();
        let tr = r.trajectory.unwrap();
        assert_eq!(tr.len(), 10);
        assert_eq!(tr[0], vec![1.5]);
        assert_eq!(tr.last().unwrap(), &r.endpoint);
    }

    #[test]
    fn divergence_reports_step() {
        let blowup = FnField::new(1, |x: &[f64], _t: f64, out: &mut [f64]| out[0] = x[0] * 1e300);
        let err = integrate(&blowup, &[1e10], &IntegrationConfig::new(Solver::Euler, 5)).unwrap_err();
        assert!(matches!(err, FlowError::Divergence { step: 1 }), "{err}");
        assert!(integrate(&linear(1.0), &[1.0], &IntegrationConfig::new(Solver::Euler, 0)).is_err());
        assert!(integrate(&linear(1.0), &[1.0, 2.0], &IntegrationConfig::default()).is_err());
    }

    #[test]
    fn moment_reference_of_gaussian_field() {
        let d = TargetDistribution::gaussian(vec![3.0, -2.0], 0.25).unwrap();
        let path = moment_reference_field(&d, 2000).unwrap();
        let m = path.final_mean();
        let c = path.final_covariance();
        assert!((m[0] - 3.0).abs() < 1e-9 && (m[1] + 2.0).abs() < 1e-9, "{m}");
        assert!((c[(0, 0)] - 0.25).abs() < 1e-9 && c[(0, 1)].abs() < 1e-12, "{c}");
        assert_eq!(path.times.len(), 2001);
        // the marginal law along the path is N(t mu, ((1-t)^2 + t^2 s2) I)
        let mid = &path.covariances[1000];
        assert!((mid[(1, 1)] - (0.25 + 0.25 * 0.25)).abs() < 1e-9);
    }

    #[test]
    fn moment_reference_of_zero_field() {
        let zero = crate::semantics::AffineField::new(2, |_t| AffineCoefficients::zeros(2));
        let path = moment_reference_field(&zero, 50).unwrap();
        assert_eq!(path.final_mean(), &DVector::zeros(2));
        assert_eq!(path.final_covariance(), &DMatrix::identity(2, 2));
        assert!(moment_reference_field(&linear(1.0), 10).is_err());
    }

    #[test]
    fn decoders() {
        assert_eq!(Decoder::Identity.decode(&[1.0, 2.0]), vec![1.0, 2.0]);
        let affine = Decoder::Affine {
            matrix: vec![vec![1.0, 1.0], vec![2.0, 0.0], vec![0.0, -1.0]],
            offset: vec![0.5, 0.0, 1.0],
        };
        affine.validate(2).unwrap();
        assert!(affine.validate(3).is_err());
        assert_eq!(affine.decode(&[1.0, 2.0]), vec![3.5, 2.0, -1.0]);
        let json = r#"{"kind":"affine","matrix":[[1,0]],"offset":[0]}"#;
        assert!(serde_json::from_str::<Decoder>(json).is_ok());
    }

    #[test]
    fn points_csv_layout() {
        let csv = String::from_utf8(points_csv("x", &[vec![1.0, -0.5], vec![0.1, 2.0]])).unwrap();
        assert_eq!(csv, "x1,x2\n1,-0.5\n0.1,2\n");
    }
}
