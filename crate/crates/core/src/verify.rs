//! Independent oracles and the built-in invariant suite.
//!
//! Nothing here calls the closed-form field code it is used to check: the
//! conditional-velocity oracle only samples `(x0, x1)` pairs and regresses
//! `x1 - x0` on `x_t` locally around the query point.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::cogspace::{CognitiveSpace, ScoreVector};
use crate::flow::{integrate, IntegrationConfig, Solver};
use crate::polarize::build_chain_orders;
use crate::semantics::{gaussian_field, AffineCoefficients, AffineField, TargetDistribution, VelocityField};
use crate::stream;

/// Monte-Carlo pairs `x0 ~ N(0, I)`, `x1 ~ N(mean, variance I)`.
pub struct ConditionalVelocityOracle {
    dim: usize,
    x0: Vec<f64>,
    x1: Vec<f64>,
}

/// Kernel estimate of `E[x1 - x0 | x_t = x]` with a per-coordinate standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelEstimate {
    pub value: Vec<f64>,
    pub std_error: Vec<f64>,
    pub effective_samples: f64,
}

impl ConditionalVelocityOracle {
    pub fn new(mean: &[f64], variance: f64, pairs: usize, seed: u64) -> Self {
        let dim = mean.len();
        let sd = variance.sqrt();
        let mut normals = stream::normal_stream(seed);
        let mut x0 = Vec::with_capacity(pairs * dim);
        let mut x1 = Vec::with_capacity(pairs * dim);
        for _ in 0..pairs {
            for _ in 0..dim {
                x0.push(normals.next().expect("infinite stream"));
            }
            for m in mean {
                x1.push(m + sd * normals.next().expect("infinite stream"));
            }
        }
        Self { dim, x0, x1 }
    }

    /// Gaussian-kernel local-linear regression of `x1 - x0` on `x_t` at `x`.
    ///
    /// Standard errors use the heteroskedasticity-robust sandwich form.
    pub fn estimate(&self, x: &[f64], t: f64, bandwidth: f64) -> KernelEstimate {
        let d = self.dim;
        let p = d + 1;
        let cutoff = (5.0 * bandwidth).powi(2);
        let mut rows: Vec<(f64, DVector<f64>, Vec<f64>)> = Vec::new();
        let mut xtwx = DMatrix::<f64>::zeros(p, p);
        let mut xtwy = DMatrix::<f64>::zeros(p, d);
        let pairs = self.x0.len() / d;
        for s in 0..pairs {
            let a = &self.x0[s * d..(s + 1) * d];
            let b = &self.x1[s * d..(s + 1) * d];
            let mut z = DVector::zeros(p);
            z[0] = 1.0;
            let mut r2 = 0.0;
            for i in 0..d {
                let xt = (1.0 - t) * a[i] + t * b[i];
                z[i + 1] = xt - x[i];
                r2 += z[i + 1] * z[i + 1];
            }
            if r2 > cutoff {
                continue;
            }
            let w = (-0.5 * r2 / (bandwidth * bandwidth)).exp();
            let u: Vec<f64> = (0..d).map(|i| b[i] - a[i]).collect();
            xtwx += &z * z.transpose() * w;
            for (j, uj) in u.iter().enumerate() {
                for k in 0..p {
                    xtwy[(k, j)] += w * z[k] * uj;
                }
            }
            rows.push((w, z, u));
        }
        let inv = xtwx
            .clone()
            .try_inverse()
            .expect("kernel design matrix is singular; widen the bandwidth");
        let beta = &inv * &xtwy;
        let value: Vec<f64> = (0..d).map(|j| beta[(0, j)]).collect();
        let mut std_error = Vec::with_capacity(d);
        for j in 0..d {
            let mut meat = DMatrix::<f64>::zeros(p, p);
            for (w, z, u) in &rows {
                let fitted: f64 = (0..p).map(|k| z[k] * beta[(k, j)]).sum();
                let r = u[j] - fitted;
                meat += z * z.transpose() * (w * w * r * r);
            }
            let cov = &inv * meat * &inv;
            std_error.push(cov[(0, 0)].max(0.0).sqrt());
        }
        let sw: f64 = rows.iter().map(|(w, _, _)| w).sum();
        let sw2: f64 = rows.iter().map(|(w, _, _)| w * w).sum();
        KernelEstimate {
            value,
            std_error,
            effective_samples: if sw2 > 0.0 { sw * sw / sw2 } else { 0.0 },
        }
    }
}

/// Least-squares slope of `log(error)` against `log(1 / steps)`.
pub fn loglog_slope(steps: &[usize], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = steps.iter().map(|&n| -(n as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Affine, time-dependent test field `v = cos(2t) x + t` on `R^2`.
pub fn convergence_test_field() -> impl VelocityField {
    AffineField::new(2, |t| AffineCoefficients {
        matrix: DMatrix::identity(2, 2) * (2.0 * t).cos(),
        offset: DVector::from_vec(vec![t, -0.5 * t]),
    })
}

/// Errors at each step count against a fine reference run of the same solver.
pub fn convergence_errors(
    field: &dyn VelocityField,
    x0: &[f64],
    solver: Solver,
    steps: &[usize],
    reference_steps: usize,
) -> Vec<f64> {
    let reference = integrate(field, x0, &IntegrationConfig::new(solver, reference_steps))
        .expect("reference run")
        .endpoint;
    steps
        .iter()
        .map(|&n| {
            let e = integrate(field, x0, &IntegrationConfig::new(solver, n))
                .expect("coarse run")
                .endpoint;
            e.iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        pass,
        detail,
    }
}

/// Fast invariant checks run by the `validate` subcommand.
pub fn invariant_suite() -> Vec<Check> {
    let mut out = Vec::new();

    let mut worst = 0.0f64;
    let mut negative = false;
    for n in 1..=4 {
        let space = CognitiveSpace::numbered(n).expect("n <= 6");
        for i in 0..2000u64 {
            let s: Vec<f64> = (0..n as u64)
                .map(|j| (stream::mix(&[n as u64, i, j]) >> 11) as f64 / (1u64 << 53) as f64)
                .collect();
            let w = space.weight_vector(&ScoreVector::new(s).expect("in range")).expect("matching n");
            negative |= w.iter().any(|&x| x < 0.0);
            worst = worst.max((w.iter().sum::<f64>() - 1.0).abs());
        }
    }
    out.push(check(
        "weights_partition_of_unity",
        worst <= 1e-12 && !negative,
        format!("max |sum - 1| = {worst:e}"),
    ));

    let mut one_hot = true;
    for n in 1..=4 {
        let space = CognitiveSpace::numbered(n).expect("n <= 6");
        for a in space.enumerate_anchors() {
            let w = space.weight_vector(&ScoreVector::from(&a)).expect("matching n");
            one_hot &= w
                .iter()
                .enumerate()
                .all(|(k, &x)| x == if k + 1 == a.index() { 1.0 } else { 0.0 });
        }
    }
    out.push(check("weights_vertex_delta", one_hot, "n = 1..4".into()));

    let mut latin = true;
    for n in 1..=6 {
        let rows = build_chain_orders(n).expect("n <= 6");
        let full: Vec<usize> = (1..=n).collect();
        for r in &rows {
            let mut s = r.clone();
            s.sort_unstable();
            latin &= s == full;
        }
        for c in 0..n {
            let mut s: Vec<usize> = rows.iter().map(|r| r[c]).collect();
            s.sort_unstable();
            latin &= s == full;
        }
    }
    out.push(check("chain_orders_latin_square", latin, "n = 1..6".into()));

    let mean = [3.0, -2.0];
    let oracle = ConditionalVelocityOracle::new(&mean, 0.25, 400_000, 7);
    let mut worst_z = 0.0f64;
    for &t in &[0.1, 0.5, 0.9] {
        let s = ((1.0 - t) * (1.0f64 - t) + t * t * 0.25).sqrt();
        let x = [t * mean[0] + 0.5 * s, t * mean[1] - 0.5 * s];
        let est = oracle.estimate(&x, t, 0.3 * s);
        let exact = gaussian_field(&mean, 0.25, &x, t).expect("valid inputs");
        for i in 0..2 {
            worst_z = worst_z.max((est.value[i] - exact[i]).abs() / est.std_error[i]);
        }
    }
    out.push(check(
        "gaussian_field_vs_monte_carlo",
        worst_z <= 4.0,
        format!("max |z| = {worst_z:.2}"),
    ));

    let mixture = TargetDistribution::mixture(vec![
        crate::semantics::MixtureComponent { weight: 0.3, mean: vec![1.0, 2.0], variance: 0.2 },
        crate::semantics::MixtureComponent { weight: 0.7, mean: vec![-1.0, 0.5], variance: 0.6 },
    ])
    .expect("valid mixture");
    let mut resp_err = 0.0f64;
    for i in 0..50 {
        let t = i as f64 / 49.0;
        let r = mixture.responsibilities(&[0.3 * i as f64 - 5.0, 1.0], t);
        resp_err = resp_err.max((r.iter().sum::<f64>() - 1.0).abs());
    }
    out.push(check(
        "mixture_responsibilities_normalized",
        resp_err <= 1e-12,
        format!("max |sum - 1| = {resp_err:e}"),
    ));

    let field = convergence_test_field();
    let steps = [10, 20, 40, 80];
    for (solver, order, tol) in [
        (Solver::Euler, 1.0, 0.15),
        (Solver::Midpoint, 2.0, 0.3),
        (Solver::Rk4, 4.0, 0.5),
    ] {
        let errors = convergence_errors(&field, &[1.0, -0.5], solver, &steps, 5120);
        let slope = loglog_slope(&steps, &errors);
        out.push(check(
            &format!("solver_order_{solver:?}").to_lowercase(),
            (slope - order).abs() <= tol,
            format!("slope {slope:.3}, expected {order} +/- {tol}"),
        ));
    }
    out
}
