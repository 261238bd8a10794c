use std::sync::Arc;

use proptest::prelude::*;

use cogflow::blend::{make_blended_field, AnchorFields, BlendMode, BlendSpec, DrawPolicy, SharedField};
use cogflow::config::{Config, ExperimentKind};
use cogflow::flow::{integrate, sample_field, IntegrationConfig, Solver};
use cogflow::harness::ExperimentRunner;
use cogflow::polarize::{build_all_sets, PolarizationCache, TemplateBackend};
use cogflow::semantics::{gaussian_field, FnField, MixtureComponent, SemanticConfig, SemanticModel, TargetDistribution};
use cogflow::{stream, CognitiveSpace};

/// Affine field `v = a * x + b * t + c` per coordinate.
fn affine(a: f64, b: f64, c: f64, dim: usize) -> SharedField {
    Arc::new(FnField::new(dim, move |x: &[f64], t: f64, out: &mut [f64]| {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = a * xi + b * t + c;
        }
    }))
}

fn spec(n: usize, base: SharedField, chain: &dyn Fn(usize, usize) -> SharedField, s: Vec<f64>, mode: BlendMode, lambda: f64) -> BlendSpec {
    let space = CognitiveSpace::numbered(n).unwrap();
    let anchors = space
        .enumerate_anchors()
        .into_iter()
        .enumerate()
        .map(|(k, anchor)| AnchorFields {
            anchor,
            chains: (0..n).map(|j| chain(k, j)).collect(),
        })
        .collect();
    BlendSpec::new(&space, base, anchors, space.score(s).unwrap(), mode, lambda).unwrap()
}

fn mode_strategy() -> impl Strategy<Value = BlendMode> {
    prop_oneof![Just(BlendMode::Stochastic), Just(BlendMode::FullAverage)]
}

fn score_strategy() -> impl Strategy<Value = (usize, Vec<f64>)> {
    (1usize..=3).prop_flat_map(|n| (Just(n), prop::collection::vec(0.0..=1.0f64, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identity_collapse((n, s) in score_strategy(), lambda in 0.0..=1.0f64, mode in mode_strategy(),
                         x in prop::collection::vec(-3.0..3.0f64, 2), t in 0.0..=1.0f64) {
        let star = affine(0.7, -1.3, 0.2, 2);
        let sp = spec(n, star.clone(), &|_, _| star.clone(), s, mode, lambda);
        let mut f = make_blended_field(Arc::new(sp), 3);
        let want = star.eval(&x, t);
        let got = f.eval(&x, t).unwrap();
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-12 * (1.0 + w.abs()));
        }
    }

    #[test]
    fn blend_is_linear_in_inner_fields((n, s) in score_strategy(), lambda in 0.0..=1.0f64, mode in mode_strategy(),
                                       x in prop::collection::vec(-3.0..3.0f64, 2), t in 0.0..=1.0f64) {
        let f = |k: usize, j: usize| affine(k as f64 * 0.3, j as f64, 1.0, 2);
        let g = |k: usize, j: usize| affine(-0.5, k as f64 - j as f64, 0.25 * k as f64, 2);
        let fg = |k: usize, j: usize| affine(k as f64 * 0.3 - 0.5, j as f64 + k as f64 - j as f64, 1.0 + 0.25 * k as f64, 2);
        let eval = |base: SharedField, chain: &dyn Fn(usize, usize) -> SharedField| {
            // same seed, so stochastic mode draws the same chains in every run
            let sp = spec(n, base, chain, s.clone(), mode, lambda);
            make_blended_field(Arc::new(sp), 17).eval(&x, t).unwrap()
        };
        let a = eval(affine(1.0, 0.0, 0.0, 2), &f);
        let b = eval(affine(0.0, 2.0, -1.0, 2), &g);
        let ab = eval(affine(1.0, 2.0, -1.0, 2), &fg);
        for i in 0..2 {
            prop_assert!((a[i] + b[i] - ab[i]).abs() <= 1e-10 * (1.0 + ab[i].abs()));
        }
    }

    #[test]
    fn eval_count_is_exact(n in 1usize..=4, mode in mode_strategy(), calls in 1u64..20) {
        let z = affine(0.0, 0.0, 0.0, 2);
        let sp = spec(n, z.clone(), &|_, _| z.clone(), vec![0.5; n], mode, 0.5);
        let mut f = make_blended_field(Arc::new(sp), 0);
        for _ in 0..calls {
            f.eval(&[0.0, 0.0], 0.5).unwrap();
        }
        let per = match mode {
            BlendMode::Stochastic => (1u64 << n) + 1,
            BlendMode::FullAverage => ((n as u64) << n) + 1,
        };
        prop_assert_eq!(f.eval_counter(), calls * per);
    }

    #[test]
    fn gaussian_field_is_affine_in_x(mu in prop::collection::vec(-5.0..5.0f64, 2), var in 1e-3..4.0f64, t in 0.0..=1.0f64,
                                     x in prop::collection::vec(-5.0..5.0f64, 2), dx in prop::collection::vec(-2.0..2.0f64, 2)) {
        let at = |k: f64| {
            let p: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + k * d).collect();
            gaussian_field(&mu, var, &p, t).unwrap()
        };
        let (a, b, c) = (at(0.0), at(1.0), at(2.0));
        for i in 0..2 {
            let scale = 1.0 + a[i].abs() + b[i].abs() + c[i].abs();
            prop_assert!((a[i] - 2.0 * b[i] + c[i]).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn responsibilities_sum_to_one(w in 0.05..0.95f64, m1 in -4.0..4.0f64, m2 in -4.0..4.0f64,
                                   v1 in 1e-3..2.0f64, v2 in 1e-3..2.0f64,
                                   x in prop::collection::vec(-50.0..50.0f64, 2), t in 0.0..=1.0f64) {
        let d = TargetDistribution::mixture(vec![
            MixtureComponent { weight: w, mean: vec![m1, 0.0], variance: v1 },
            MixtureComponent { weight: 1.0 - w, mean: vec![m2, 1.0], variance: v2 },
        ]).unwrap();
        let r = d.responsibilities(&x, t);
        prop_assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(r.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn chain_poles_match_anchor_bits(n in 1usize..=4) {
        let space = CognitiveSpace::numbered(n).unwrap();
        let sets = build_all_sets(&TemplateBackend, "a hill", &space, &PolarizationCache::in_memory()).unwrap();
        for set in sets {
            prop_assert_eq!(set.chains.len(), n);
            for (j, chain) in set.chains.iter().enumerate() {
                prop_assert_eq!(chain.applications[0].0, j + 1);
                prop_assert_eq!(chain.intermediates.last().unwrap(), &chain.result);
                for &(dim, pole) in &chain.applications {
                    prop_assert_eq!(pole, set.anchor.pole(dim - 1));
                }
            }
        }
    }

    #[test]
    fn chain_average_cancels_position_bias(n in 1usize..=5, beta in 0.0..=1.0f64) {
        let space = CognitiveSpace::numbered(n).unwrap();
        let cfg = SemanticConfig { position_bias: beta, ..SemanticConfig::default() };
        let biased = SemanticModel::new(&space, &cfg).unwrap();
        let flat = SemanticModel::new(&space, &SemanticConfig::default()).unwrap();
        let sets = build_all_sets(&TemplateBackend, "a valley", &space, &PolarizationCache::in_memory()).unwrap();
        for set in sets {
            let d = biased.latent_dim();
            let mut avg = vec![0.0; d];
            let mut reference = None;
            for chain in &set.chains {
                let m = biased.bind(&chain.result).unwrap().mean();
                for i in 0..d {
                    avg[i] += m[i] / n as f64;
                }
                reference.get_or_insert(flat.bind(&chain.result).unwrap().mean());
            }
            let reference = reference.unwrap();
            for i in 0..d {
                prop_assert!((avg[i] - reference[i]).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn trajectory_has_n_plus_one_states() {
    let field = TargetDistribution::gaussian(vec![1.0, 2.0], 0.5).unwrap();
    for solver in [Solver::Euler, Solver::Midpoint, Solver::Rk4] {
        let cfg = IntegrationConfig { record_trajectory: true, ..IntegrationConfig::new(solver, 17) };
        let run = integrate(&field, &[0.3, -0.1], &cfg).unwrap();
        let tr = run.trajectory.unwrap();
        assert_eq!(tr.len(), 18);
        assert_eq!(tr[0], vec![0.3, -0.1]);
        assert_eq!(tr.last().unwrap(), &run.endpoint);
    }
}

#[test]
fn samples_do_not_depend_on_batch_size() {
    let field = TargetDistribution::gaussian(vec![1.0, 2.0], 0.5).unwrap();
    let cfg = IntegrationConfig::new(Solver::Rk4, 20);
    let small = sample_field(&field, 9, 5, &cfg).unwrap();
    let large = sample_field(&field, 9, 50, &cfg).unwrap();
    assert_eq!(small[..], large[..5]);
    assert_ne!(stream::standard_normal(stream::sample_seed(9, 3), 2), stream::standard_normal(stream::sample_seed(9, 4), 2));
}

#[test]
fn per_step_policy_draws_once_per_step() {
    let space = CognitiveSpace::numbered(2).unwrap();
    let model = SemanticModel::new(&space, &SemanticConfig { position_bias: 0.5, ..Default::default() }).unwrap();
    let sets = build_all_sets(&TemplateBackend, "a valley", &space, &PolarizationCache::in_memory()).unwrap();
    let base: SharedField = Arc::new(model.bind("a valley").unwrap());
    let anchors = sets
        .iter()
        .map(|s| AnchorFields {
            anchor: s.anchor.clone(),
            chains: s.chains.iter().map(|c| Arc::new(model.bind(&c.result).unwrap()) as SharedField).collect(),
        })
        .collect();
    let sp = BlendSpec::new(&space, base, anchors, space.score(vec![0.4, 0.6]).unwrap(), BlendMode::Stochastic, 0.5)
        .unwrap()
        .with_draw_policy(DrawPolicy::PerStep);
    let mut f = make_blended_field(Arc::new(sp), 4);
    f.begin_step(3);
    let a = f.eval(&[0.1, 0.2], 0.3).unwrap();
    let b = f.eval(&[0.1, 0.2], 0.3).unwrap();
    assert_eq!(a, b);
}

#[test]
fn experiments_are_reproducible() {
    let doc = serde_json::to_value(Config::numbered(2)).unwrap();
    let o = vec!["semantics.position_bias=0.5".to_string(), "flow.samples=64".into(), "flow.steps=20".into()];
    for kind in [ExperimentKind::VertexRecovery, ExperimentKind::ResponseSweep, ExperimentKind::StochasticEquivalence] {
        let run = || {
            let cfg = Config::from_value(doc.clone(), &o).unwrap();
            ExperimentRunner::new(cfg).unwrap().run(kind).unwrap().report
        };
        let (a, b) = (run(), run());
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap(), "{kind:?}");
        assert!(a.records.iter().all(|r| r.config_digest == a.config_digest));
    }
}
