use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use log::warn;
use nalgebra::{DMatrix, DVector};

use super::{Criterion, ExperimentOutput, HarnessError, MetricRecord, MetricsReport, Timing};
use crate::blend::{inner_evals_per_call, BlendMode, BlendSpec};
use crate::cogspace::{CognitiveSpace, ScoreVector};
use crate::config::{BackendKind, Config, ExperimentKind};
use crate::flow::{
    moment_reference, prepare_fields, sample_spec, Decoder, GenerationContext, PreparedFields, SampleBatch,
};
use crate::polarize::{PolarizationCache, PolarizerBackend, TemplateBackend};
use crate::semantics::SemanticModel;
use crate::stats::{within_se, z_score, SampleMoments};

const SE_FACTOR: f64 = 3.0;

/// Runs named experiments for one config.
pub struct ExperimentRunner {
    config: Config,
    digest: String,
    model: SemanticModel,
    backend: Box<dyn PolarizerBackend>,
    cache: PolarizationCache,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn fmt_score(s: &[f64]) -> String {
    let parts: Vec<String> = s.iter().map(|v| v.to_string()).collect();
    format!("({})", parts.join(","))
}

/// Outcome of comparing sample moments with a reference.
struct Comparison {
    mean_z: f64,
    cov_z: f64,
    mean_ok: bool,
    cov_ok: bool,
}

fn compare(m: &SampleMoments, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Comparison {
    let d = mean.len();
    let mut c = Comparison {
        mean_z: 0.0,
        cov_z: 0.0,
        mean_ok: true,
        cov_ok: true,
    };
    for i in 0..d {
        c.mean_z = c.mean_z.max(z_score(m.mean[i], mean[i], m.mean_se[i]));
        c.mean_ok &= within_se(m.mean[i], mean[i], m.mean_se[i], SE_FACTOR);
        for j in i..d {
            let se = m.covariance_se[(i, j)];
            c.cov_z = c.cov_z.max(z_score(m.covariance[(i, j)], cov[(i, j)], se));
            c.cov_ok &= within_se(m.covariance[(i, j)], cov[(i, j)], se, SE_FACTOR);
        }
    }
    c
}

impl ExperimentRunner {
    /// Uses the backend named in the config.
    pub fn new(config: Config) -> Result<Self, HarnessError> {
        let kind = config.polarize.backend;
        Self::with_backend(config, kind)
    }

    pub fn with_backend(config: Config, kind: BackendKind) -> Result<Self, HarnessError> {
        config.validate()?;
        let model = config.semantic_model()?;
        let backend = config.backend(kind)?;
        let cache = config.open_cache()?;
        Ok(Self {
            digest: config.digest(),
            config,
            model,
            backend,
            cache,
        })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    fn space(&self) -> &CognitiveSpace {
        &self.config.space
    }

    pub fn run(&self, kind: ExperimentKind) -> Result<ExperimentOutput, HarnessError> {
        match kind {
            ExperimentKind::VertexRecovery => self.vertex_recovery(),
            ExperimentKind::ContinuitySweep => self.continuity_sweep(),
            ExperimentKind::OrderBias => self.order_bias_experiment(),
            ExperimentKind::CostAccounting => self.cost_accounting(),
            ExperimentKind::StochasticEquivalence => self.stochastic_equivalence(),
            ExperimentKind::ResponseSweep => self.response_sweep(),
        }
    }

    /// Runs the kind named in `experiment.kind`.
    pub fn run_configured(&self) -> Result<ExperimentOutput, HarnessError> {
        let kind = self
            .config
            .experiment
            .kind
            .ok_or_else(|| HarnessError::Setup("experiment.kind is not set".into()))?;
        self.run(kind)
    }

    fn prepare(&self, model: &SemanticModel) -> Result<PreparedFields, HarnessError> {
        let ctx = GenerationContext {
            space: self.space(),
            model,
            backend: self.backend.as_ref(),
            cache: &self.cache,
        };
        Ok(prepare_fields(&ctx, &self.config.polarize.base_prompt)?)
    }

    fn spec(
        &self,
        prepared: &PreparedFields,
        score: &ScoreVector,
        mode: BlendMode,
        lambda: f64,
    ) -> Result<BlendSpec, HarnessError> {
        Ok(prepared.spec(self.space(), score.clone(), mode, lambda, self.config.blend.draw)?)
    }

    fn sample(&self, spec: BlendSpec, count: usize) -> Result<SampleBatch, HarnessError> {
        Ok(sample_spec(
            Arc::new(spec),
            self.config.flow.seed,
            count,
            &self.config.flow.integration(),
            &Decoder::Identity,
        )?)
    }

    fn record(&self, label: String, score: &ScoreVector) -> MetricRecord {
        MetricRecord {
            config_digest: self.digest.clone(),
            label,
            score: score.values().to_vec(),
            ..MetricRecord::default()
        }
    }

    fn moments_record(
        &self,
        label: String,
        score: &ScoreVector,
        batch: &SampleBatch,
        reference: Option<(&DVector<f64>, &DMatrix<f64>)>,
    ) -> (MetricRecord, SampleMoments, Option<Comparison>) {
        let m = SampleMoments::from_points(&batch.endpoints);
        let mut r = self.record(label, score);
        r.mean = Some(m.mean.as_slice().to_vec());
        r.mean_se = Some(m.mean_se.as_slice().to_vec());
        r.covariance = Some(rows(&m.covariance));
        r.eval_count = Some(batch.metadata.eval_count);
        let cmp = reference.map(|(mean, cov)| {
            let c = compare(&m, mean, cov);
            r.oracle_mean = Some(mean.as_slice().to_vec());
            r.oracle_covariance = Some(rows(cov));
            r.mean_discrepancy = Some((&m.mean - mean).norm());
            r.mean_z = Some(c.mean_z);
            r.covariance_z = Some(c.cov_z);
            c
        });
        (r, m, cmp)
    }

    /// Each vertex with the base term removed must reproduce its anchor's
    /// target; with the half-base mix it must match the moment oracle.
    pub fn vertex_recovery(&self) -> Result<ExperimentOutput, HarnessError> {
        let mut report = MetricsReport::new(&self.digest, ExperimentKind::VertexRecovery.name());
        let mut timings = Vec::new();
        let model = self.model.clone().with_position_bias(0.0);
        let prepared = self.prepare(&model)?;
        let samples = self.config.flow.samples;
        let mut pure = (0.0f64, 0.0f64, true, true);
        let mut mixed = (0.0f64, 0.0f64, true, true);
        let mut mixed_checked = 0usize;
        for (anchor, chains) in &prepared.anchors {
            let score = ScoreVector::from(anchor);
            let started = Instant::now();
            let spec = self.spec(&prepared, &score, BlendMode::FullAverage, 0.0)?;
            let batch = self.sample(spec, samples)?;
            let target = &chains[0];
            let (tm, tc) = (DVector::from_vec(target.mean()), target.covariance());
            let (rec, _, cmp) =
                self.moments_record(format!("anchor {anchor} lambda=0"), &score, &batch, Some((&tm, &tc)));
            let cmp = cmp.expect("reference given");
            pure = (pure.0.max(cmp.mean_z), pure.1.max(cmp.cov_z), pure.2 && cmp.mean_ok, pure.3 && cmp.cov_ok);
            report.records.push(rec);
            timings.push(Timing {
                label: format!("anchor {anchor} lambda=0"),
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });

            let started = Instant::now();
            let spec = self.spec(&prepared, &score, BlendMode::FullAverage, 0.5)?;
            let oracle = match moment_reference(&spec, self.config.flow.moment_steps) {
                Ok(path) => Some(path),
                Err(e) => {
                    report
                        .summary
                        .warnings
                        .push(format!("anchor {anchor}: no moment oracle ({e})"));
                    None
                }
            };
            let batch = self.sample(spec, samples)?;
            let reference = oracle.as_ref().map(|p| (p.final_mean(), p.final_covariance()));
            let (rec, _, cmp) =
                self.moments_record(format!("anchor {anchor} lambda=0.5"), &score, &batch, reference);
            if let Some(c) = cmp {
                mixed_checked += 1;
                mixed = (mixed.0.max(c.mean_z), mixed.1.max(c.cov_z), mixed.2 && c.mean_ok, mixed.3 && c.cov_ok);
            }
            report.records.push(rec);
            timings.push(Timing {
                label: format!("anchor {anchor} lambda=0.5"),
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });
        }
        let c = &mut report.summary.criteria;
        c.push(Criterion::new("anchor_target_mean_lambda0", pure.0, "max z <= 3", pure.2));
        c.push(Criterion::new("anchor_target_covariance_lambda0", pure.1, "max z <= 3", pure.3));
        if mixed_checked == prepared.anchors.len() {
            c.push(Criterion::new("moment_oracle_mean_lambda0.5", mixed.0, "max z <= 3", mixed.2));
            c.push(Criterion::new("moment_oracle_covariance_lambda0.5", mixed.1, "max z <= 3", mixed.3));
        } else {
            c.push(Criterion::inconclusive("moment_oracle_mean_lambda0.5", "max z <= 3"));
            c.push(Criterion::inconclusive("moment_oracle_covariance_lambda0.5", "max z <= 3"));
        }
        Ok(ExperimentOutput { report, timings })
    }

    /// Endpoint displacement under small score perturbations with shared seeds.
    pub fn continuity_sweep(&self) -> Result<ExperimentOutput, HarnessError> {
        if self.config.blend.mode == BlendMode::Stochastic {
            return Err(HarnessError::Setup(
                "continuity sweep needs full_average mode; stochastic draws break the seed pairing".into(),
            ));
        }
        let mut report = MetricsReport::new(&self.digest, ExperimentKind::ContinuitySweep.name());
        let mut timings = Vec::new();
        let n = self.space().n();
        let exp = &self.config.experiment;
        let start = exp.path_start.clone().unwrap_or_else(|| vec![0.0; n]);
        let end = exp.path_end.clone().unwrap_or_else(|| vec![1.0; n]);
        let span: Vec<f64> = end.iter().zip(&start).map(|(e, s)| e - s).collect();
        let length = span.iter().map(|v| v * v).sum::<f64>().sqrt();
        if length == 0.0 {
            return Err(HarnessError::Setup("continuity path has zero length".into()));
        }
        let unit: Vec<f64> = span.iter().map(|v| v / length).collect();
        let prepared = self.prepare(&self.model)?;
        let lambda = self.config.blend.lambda;
        let samples = self.config.flow.samples;
        for &frac in &exp.path_points {
            let base_vals: Vec<f64> = start.iter().zip(&span).map(|(s, d)| s + frac * d).collect();
            let score = self
                .space()
                .score(base_vals.clone())
                .map_err(|e| HarnessError::Setup(format!("path point {frac}: {e}")))?;
            let started = Instant::now();
            let base = self.sample(self.spec(&prepared, &score, BlendMode::FullAverage, lambda)?, samples)?;
            let mut displacements = Vec::new();
            for &delta in &exp.deltas {
                let moved: Vec<f64> = base_vals.iter().zip(&unit).map(|(s, u)| s + delta * u).collect();
                let moved = self.space().score(moved).map_err(|e| {
                    HarnessError::Setup(format!("path point {frac} + {delta} leaves the hypercube: {e}"))
                })?;
                let batch = self.sample(self.spec(&prepared, &moved, BlendMode::FullAverage, lambda)?, samples)?;
                let ms: f64 = batch
                    .endpoints
                    .iter()
                    .zip(&base.endpoints)
                    .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>())
                    .sum::<f64>()
                    / samples as f64;
                let disp = ms.sqrt();
                displacements.push((delta, disp));
                let mut rec = self.record(format!("t={frac} ds={delta:e}"), &moved);
                rec.eval_count = Some(batch.metadata.eval_count);
                rec.values = BTreeMap::from([
                    ("path_fraction".to_string(), frac),
                    ("delta".to_string(), delta),
                    ("rms_displacement".to_string(), disp),
                ]);
                report.records.push(rec);
            }
            timings.push(Timing {
                label: format!("path point {frac}"),
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });
            for pair in displacements.windows(2) {
                let ((d0, x0), (d1, x1)) = (pair[0], pair[1]);
                let name = format!("displacement_ratio t={frac} ({d0:e}/{d1:e})");
                let threshold = "in [5, 20]";
                if x1 == 0.0 || d1 == 0.0 {
                    report.summary.criteria.push(Criterion::inconclusive(name, threshold));
                    report
                        .summary
                        .warnings
                        .push(format!("t={frac}: zero displacement at ds={d1:e}; ratio undefined"));
                } else {
                    let ratio = x0 / x1;
                    report
                        .summary
                        .criteria
                        .push(Criterion::new(name, ratio, threshold, (5.0..=20.0).contains(&ratio)));
                }
            }
        }
        Ok(ExperimentOutput { report, timings })
    }

    /// Per-chain effective dimension weights recovered from the bound means.
    pub fn order_bias_experiment(&self) -> Result<ExperimentOutput, HarnessError> {
        let mut report = MetricsReport::new(&self.digest, ExperimentKind::OrderBias.name());
        let model = &self.model;
        let beta = model.position_bias();
        if beta == 0.0 {
            let msg = "position_bias is 0; the order-bias experiment is vacuous".to_string();
            warn!("{msg}");
            report.summary.warnings.push(msg);
        }
        let space = self.space();
        let n = space.n();
        let d = model.latent_dim();
        let cache = PolarizationCache::in_memory();
        let ctx = GenerationContext {
            space,
            model,
            backend: &TemplateBackend,
            cache: &cache,
        };
        let prepared = prepare_fields(&ctx, &self.config.polarize.base_prompt)?;
        let base = DVector::from_column_slice(model.base_mean());
        let mut worst_single = 0.0f64;
        let mut worst_avg = 0.0f64;
        for ((anchor, chains), set) in prepared.anchors.iter().zip(&prepared.sets) {
            let mut design = DMatrix::zeros(d, n);
            for i in 0..n {
                let scale = anchor.pole(i).sign() * model.magnitudes()[i];
                for r in 0..d {
                    design[(r, i)] = scale * model.directions()[i][r];
                }
            }
            let gram = design.transpose() * &design;
            let gram_inv = gram
                .try_inverse()
                .ok_or_else(|| HarnessError::Setup("dimension directions are linearly dependent".into()))?;
            let mut rec = self.record(format!("anchor {anchor}"), &ScoreVector::from(anchor));
            let mut sums = vec![0.0; n];
            for (j, (dist, chain)) in chains.iter().zip(&set.chains).enumerate() {
                let shift = DVector::from_vec(dist.mean()) - &base;
                let weights = &gram_inv * (design.transpose() * shift);
                for i in 0..n {
                    worst_single = worst_single.max((weights[i] - 1.0).abs());
                    sums[i] += weights[i];
                    rec.values.insert(format!("chain{}_dim{}_weight", j + 1, i + 1), weights[i]);
                }
                rec.values.insert(
                    format!("chain{}_first_dim", j + 1),
                    chain.applications[0].0 as f64,
                );
            }
            let mut anchor_avg = 0.0f64;
            for (i, s) in sums.iter().enumerate() {
                let avg = s / n as f64;
                rec.values.insert(format!("avg_dim{}_weight", i + 1), avg);
                anchor_avg = anchor_avg.max((avg - 1.0).abs());
            }
            rec.values.insert("averaged_asymmetry".into(), anchor_avg);
            worst_avg = worst_avg.max(anchor_avg);
            report.records.push(rec);
        }
        let expected = beta * (n as f64 - 1.0) / (2.0 * n as f64);
        report.summary.criteria.push(Criterion::new(
            "latin_square_averaged_asymmetry",
            worst_avg,
            "<= 1e-12",
            worst_avg <= 1e-12,
        ));
        report.summary.criteria.push(Criterion::new(
            "worst_single_chain_asymmetry",
            worst_single,
            format!("= {expected} (bias (n-1)/(2n)) within 1e-12"),
            (worst_single - expected).abs() <= 1e-12,
        ));
        Ok(ExperimentOutput {
            report,
            timings: Vec::new(),
        })
    }

    /// Exact inner-evaluation counts of the two modes on the same request.
    pub fn cost_accounting(&self) -> Result<ExperimentOutput, HarnessError> {
        let mut report = MetricsReport::new(&self.digest, ExperimentKind::CostAccounting.name());
        let mut timings = Vec::new();
        let prepared = self.prepare(&self.model)?;
        let score = self.config.score()?;
        let n = self.space().n();
        let samples = self.config.flow.samples;
        let integration = self.config.flow.integration();
        let calls = (samples * integration.steps * integration.solver.stages()) as u64;
        let mut counts = Vec::new();
        for mode in [BlendMode::Stochastic, BlendMode::FullAverage] {
            let started = Instant::now();
            let batch = self.sample(self.spec(&prepared, &score, mode, self.config.blend.lambda)?, samples)?;
            let wall = started.elapsed().as_secs_f64() * 1e3;
            let per_call = inner_evals_per_call(mode, n);
            let label = format!("{mode:?}");
            let mut rec = self.record(label.clone(), &score);
            rec.eval_count = Some(batch.metadata.eval_count);
            rec.values = BTreeMap::from([
                ("blend_calls".to_string(), calls as f64),
                ("evals_per_call".to_string(), batch.metadata.eval_count as f64 / calls as f64),
            ]);
            report.records.push(rec);
            report.summary.criteria.push(Criterion::new(
                format!("{}_eval_count_exact", label.to_lowercase()),
                batch.metadata.eval_count as f64,
                format!("= {} calls x {per_call}", calls),
                batch.metadata.eval_count == calls * per_call,
            ));
            timings.push(Timing { label, wall_ms: wall });
            counts.push(batch.metadata.eval_count);
        }
        let (stoch, full) = (counts[0], counts[1]);
        let (num, den) = (inner_evals_per_call(BlendMode::Stochastic, n), inner_evals_per_call(BlendMode::FullAverage, n));
        let ratio = stoch as f64 / full as f64;
        report.summary.criteria.push(Criterion::new(
            "stochastic_to_full_eval_ratio",
            ratio,
            format!("= {num}/{den} = {}", num as f64 / den as f64),
            stoch * den == full * num,
        ));
        Ok(ExperimentOutput { report, timings })
    }

    /// Stochastic-mode endpoint mean against full-mode endpoint mean.
    pub fn stochastic_equivalence(&self) -> Result<ExperimentOutput, HarnessError> {
        let mut report = MetricsReport::new(&self.digest, ExperimentKind::StochasticEquivalence.name());
        let mut timings = Vec::new();
        if self.model.position_bias() == 0.0 && self.config.semantics.bindings.is_empty() {
            report
                .summary
                .warnings
                .push("position_bias is 0, so all chains of an anchor coincide".into());
        }
        let prepared = self.prepare(&self.model)?;
        let score = self.config.score()?;
        let seeds = self.config.experiment.seeds;
        if seeds == 0 {
            return Err(HarnessError::Setup("experiment.seeds must be at least 1".into()));
        }
        let mut moments = Vec::new();
        for mode in [BlendMode::Stochastic, BlendMode::FullAverage] {
            let started = Instant::now();
            let batch = self.sample(self.spec(&prepared, &score, mode, self.config.blend.lambda)?, seeds)?;
            let (rec, m, _) = self.moments_record(format!("{mode:?}"), &score, &batch, None);
            report.records.push(rec);
            moments.push(m);
            timings.push(Timing {
                label: format!("{mode:?}"),
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });
        }
        let name = "stochastic_vs_full_mean";
        let threshold = "max z (combined SE) <= 3";
        if seeds < 2 {
            report.summary.criteria.push(Criterion::inconclusive(name, threshold));
            report
                .summary
                .warnings
                .push("a single seed gives no standard error".into());
        } else {
            let (s, f) = (&moments[0], &moments[1]);
            let mut worst = 0.0f64;
            let mut ok = true;
            for i in 0..s.mean.len() {
                let se = (s.mean_se[i].powi(2) + f.mean_se[i].powi(2)).sqrt();
                worst = worst.max(z_score(s.mean[i], f.mean[i], se));
                ok &= within_se(s.mean[i], f.mean[i], se, SE_FACTOR);
            }
            report.summary.criteria.push(Criterion::new(name, worst, threshold, ok));
        }
        Ok(ExperimentOutput { report, timings })
    }

    /// Endpoint mean projected on one dimension's direction while that
    /// dimension's score is swept.
    pub fn response_sweep(&self) -> Result<ExperimentOutput, HarnessError> {
        let mut report = MetricsReport::new(&self.digest, ExperimentKind::ResponseSweep.name());
        let mut timings = Vec::new();
        let exp = &self.config.experiment;
        let axis = exp.sweep_axis - 1;
        let direction = DVector::from_column_slice(&self.model.directions()[axis]);
        let prepared = self.prepare(&self.model)?;
        let center = self.config.score()?;
        let mut points: Vec<(f64, f64, f64)> = Vec::new();
        for &value in &exp.sweep_values {
            let mut vals = center.values().to_vec();
            vals[axis] = value;
            let score = self.space().score(vals).map_err(|e| HarnessError::Setup(e.to_string()))?;
            let started = Instant::now();
            let batch = self.sample(
                self.spec(&prepared, &score, self.config.blend.mode, self.config.blend.lambda)?,
                self.config.flow.samples,
            )?;
            let (mut rec, m, _) = self.moments_record(format!("s{}={value}", axis + 1), &score, &batch, None);
            let proj = direction.dot(&m.mean);
            let proj_se = ((direction.transpose() * &m.covariance * &direction)[(0, 0)] / m.count as f64)
                .max(0.0)
                .sqrt();
            rec.values = BTreeMap::from([
                ("projection".to_string(), proj),
                ("projection_se".to_string(), proj_se),
            ]);
            report.records.push(rec);
            points.push((value, proj, proj_se));
            timings.push(Timing {
                label: fmt_score(score.values()),
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut worst = 0.0f64;
        let mut ok = true;
        for w in points.windows(2) {
            let se = (w[0].2.powi(2) + w[1].2.powi(2)).sqrt();
            let drop = w[0].1 - w[1].1;
            ok &= drop <= SE_FACTOR * se + 1e-9;
            if drop > 0.0 {
                worst = worst.max(if se > 0.0 { drop / se } else { f64::INFINITY });
            }
        }
        report.summary.criteria.push(Criterion::new(
            format!("projection_nondecreasing_in_s{}", axis + 1),
            worst,
            "largest standardized decrease <= 3",
            ok,
        ));
        Ok(ExperimentOutput { report, timings })
    }
}
