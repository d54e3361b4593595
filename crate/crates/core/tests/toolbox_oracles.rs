//! Toolbox methods checked against brute-force retraining and against their
//! algebraic identities.

use std::sync::OnceLock;

use hessian_toolbox::hessian::{ensemble_subspace, DampedHessian, Spectrum};
use hessian_toolbox::model::{Example, LossKind, ModelConfig, ModelState, Objective, TrainConfig};
use hessian_toolbox::toolbox::*;
use ndarray::Array2;
use proptest::prelude::*;

struct Fixture {
    problem: ConvexProblem,
    hessian: DampedHessian,
    train_grads: Vec<Vec<f64>>,
    test_grads: Vec<Vec<f64>>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let problem = convex_problem(9, 50, 40, 30.0, 1).unwrap();
        let obj = Objective::new(&problem.model.config, &problem.train, problem.train_cfg.weight_decay);
        let hessian = DampedHessian::from_model(&problem.model, &obj, 4000).unwrap();
        let train_grads = per_sample_gradients(&problem.model, &problem.train, LossKind::GroundTruth).unwrap();
        let test_grads = per_sample_gradients(&problem.model, &problem.test, LossKind::GroundTruth).unwrap();
        Fixture { problem, hessian, train_grads, test_grads }
    })
}

fn oracle_cfg(p: &ConvexProblem) -> TrainConfig {
    TrainConfig { g_tol: 1e-8, ..p.train_cfg.clone() }
}

fn logistic_fit(train: &[Example], weight_decay: f64) -> (ModelState, TrainConfig) {
    let cfg = TrainConfig { weight_decay, g_tol: 1e-10, ..TrainConfig::default() };
    let start = ModelState::zeros(ModelConfig::logistic(train[0].x.len(), 2)).unwrap();
    let model = minimize(&start, train, &vec![1.0; train.len()], &cfg).unwrap();
    (model, cfg)
}

#[test]
fn convex_model_is_converged_and_well_posed() {
    let f = fixture();
    let p = &f.problem;
    assert_eq!(p.model.param_count(), 20);
    let obj = Objective::new(&p.model.config, &p.train, p.train_cfg.weight_decay);
    let g = obj.gradient(&p.model.theta).unwrap();
    assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-8);
    assert!(f.hessian.spectrum.min() > 0.0);
}

#[test]
fn influence_tracks_leave_one_out_retraining() {
    let f = fixture();
    let p = &f.problem;
    let solves = TrainSolves::new(&f.hessian, &f.train_grads).unwrap();
    let records: Vec<Vec<InfluenceRecord>> =
        f.test_grads.iter().enumerate().map(|(t, g)| influence_records(&solves, t, g).unwrap()).collect();
    let cfg = oracle_cfg(p);
    let (mut predicted, mut exact) = (Vec::new(), Vec::new());
    for r in 0..p.train.len() {
        let delta = loo_oracle(&p.model, &p.train, &p.test, &cfg, r, LossKind::GroundTruth, LooMode::DropTerm).unwrap();
        for (t, d) in delta.iter().enumerate() {
            predicted.push(records[t][r].influence);
            exact.push(*d);
        }
    }
    let r = stats::pearson(&predicted, &exact).unwrap();
    let agree = predicted.iter().zip(&exact).filter(|(a, b)| a.signum() == b.signum()).count();
    let fraction = agree as f64 / predicted.len() as f64;
    assert!(r >= 0.95, "pearson {r}");
    assert!(fraction >= 0.9, "sign agreement {fraction}");
}

#[test]
fn records_satisfy_similarity_and_relatif_identities() {
    let f = fixture();
    let solves = TrainSolves::new(&f.hessian, &f.train_grads).unwrap();
    let n = f.problem.train.len() as f64;
    for (t, g) in f.test_grads.iter().enumerate() {
        for rec in influence_records(&solves, t, g).unwrap() {
            let expected = (n * rec.influence).powi(2);
            assert!((rec.similarity - expected).abs() <= 1e-9 * expected.max(1e-300));
            let ir = rec.relatif.unwrap();
            assert!(ir == 0.0 || ir.signum() == rec.influence.signum());
        }
    }
}

#[test]
fn rue_ranks_match_bootstrap_retraining() {
    let f = fixture();
    let p = &f.problem;
    let plan = BootstrapPlan::sample(p.train.len(), 200, 11).unwrap();
    let ens = RueEnsemble::new(&f.hessian, &p.model, &f.train_grads, &plan).unwrap();
    let rue: Vec<f64> =
        p.test.iter().enumerate().map(|(i, e)| ens.variance(i, e, LossKind::Minimal).unwrap().variance).collect();
    let oracle = bootstrap_oracle(&p.model, &p.train, &p.test, &oracle_cfg(p), &plan, LossKind::Minimal).unwrap();
    let rho = stats::spearman(&rue, &oracle.variance).unwrap();
    assert!(rho >= 0.9, "spearman {rho}");
}

#[test]
fn identity_plan_gives_zero_variance() {
    let f = fixture();
    let p = &f.problem;
    let plan = BootstrapPlan::identity(p.train.len(), 5);
    let oracle = bootstrap_oracle(&p.model, &p.train, &p.test, &oracle_cfg(p), &plan, LossKind::Minimal).unwrap();
    assert!(oracle.variance.iter().all(|v| *v == 0.0));
    let ens = RueEnsemble::new(&f.hessian, &p.model, &f.train_grads, &plan).unwrap();
    for (i, e) in p.test.iter().enumerate() {
        assert_eq!(ens.variance(i, e, LossKind::Minimal).unwrap().variance, 0.0);
    }
}

#[test]
fn single_point_bootstrap_is_forced() {
    let train = vec![Example { x: vec![1.0, -0.5], y: 1 }];
    let (model, cfg) = logistic_fit(&train, 0.1);
    let plan = BootstrapPlan::sample(1, 30, 3).unwrap();
    assert!(plan.counts.iter().all(|row| row == &vec![1]));
    let test = vec![Example { x: vec![0.3, 0.2], y: 0 }];
    let oracle = bootstrap_oracle(&model, &train, &test, &cfg, &plan, LossKind::Minimal).unwrap();
    assert_eq!(oracle.variance, vec![0.0]);
    let obj = Objective::new(&model.config, &train, cfg.weight_decay);
    let h = DampedHessian::from_model(&model, &obj, 100).unwrap();
    let grads = per_sample_gradients(&model, &train, LossKind::GroundTruth).unwrap();
    let r = rue_variance(&h, &model, &grads, &plan, 0, &test[0], LossKind::Minimal).unwrap();
    assert_eq!(r.variance, 0.0);
    assert_eq!(r.losses.len(), 30);
}

#[test]
fn doubling_b_is_monte_carlo_consistent() {
    let f = fixture();
    let p = &f.problem;
    let cfg = oracle_cfg(p);
    let small = bootstrap_oracle(&p.model, &p.train, &p.test, &cfg, &BootstrapPlan::sample(50, 100, 5).unwrap(), LossKind::Minimal)
        .unwrap();
    let large = bootstrap_oracle(&p.model, &p.train, &p.test, &cfg, &BootstrapPlan::sample(50, 200, 5).unwrap(), LossKind::Minimal)
        .unwrap();
    // The first 100 rows are shared.
    assert_eq!(small.losses[..], large.losses[..100]);
    for t in 0..p.test.len() {
        let change = (large.variance[t] - small.variance[t]).abs();
        assert!(change < 3.0 * large.std_error[t], "test point {t}: change {change}, se {}", large.std_error[t]);
    }
}

#[test]
fn removing_a_redundant_point_changes_nothing() {
    // The last point sits so deep in its class that its loss, gradient and
    // curvature are zero in double precision.
    let mut train: Vec<Example> = (0..10)
        .map(|i| {
            let y = i % 2;
            let s = if y == 0 { -1.0 } else { 1.0 };
            Example { x: vec![s * (1.0 + 0.1 * i as f64), 0.3 * (i as f64 - 4.5)], y }
        })
        .collect();
    train.push(Example { x: vec![1e4, 0.0], y: 1 });
    let (model, cfg) = logistic_fit(&train, 0.05);
    let last = per_sample_gradients(&model, &train[10..], LossKind::GroundTruth).unwrap();
    assert!(last[0].iter().all(|v| v.abs() < 1e-300));
    let test = vec![Example { x: vec![0.4, 1.0], y: 1 }, Example { x: vec![-0.7, -0.2], y: 0 }];
    let delta = loo_oracle(&model, &train, &test, &cfg, 10, LossKind::GroundTruth, LooMode::DropTerm).unwrap();
    assert!(delta.iter().all(|d| d.abs() <= 1e-6), "{delta:?}");
}

#[test]
fn removing_the_only_member_of_a_class_hurts_that_class() {
    let train = vec![Example { x: vec![-1.0], y: 0 }, Example { x: vec![1.0], y: 1 }];
    let (model, cfg) = logistic_fit(&train, 0.1);
    let test = vec![Example { x: vec![0.8], y: 1 }];
    for mode in [LooMode::DropTerm, LooMode::Renormalize] {
        let delta = loo_oracle(&model, &train, &test, &cfg, 1, LossKind::GroundTruth, mode).unwrap();
        assert!(delta[0] > 0.0, "{mode:?}: {delta:?}");
    }
}

#[test]
fn loo_rejects_bad_index() {
    let f = fixture();
    let p = &f.problem;
    let err = loo_oracle(&p.model, &p.train, &p.test, &p.train_cfg, 50, LossKind::GroundTruth, LooMode::DropTerm);
    assert!(err.is_err());
}

/// Random symmetric positive-definite matrix `A A^T / m + 0.1 I`.
fn spd(m: usize, entries: &[f64]) -> Array2<f64> {
    let a = Array2::from_shape_vec((m, m), entries.to_vec()).unwrap();
    let mut h = a.dot(&a.t()) / m as f64;
    for i in 0..m {
        h[[i, i]] += 0.1;
    }
    h
}

fn case(m: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-2.0..2.0f64, m * m),
        prop::collection::vec(-3.0..3.0f64, m),
        prop::collection::vec(-3.0..3.0f64, m),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relatif_ignores_positive_rescaling((a, g, t) in case(6), alpha in 1e-3..1e3f64) {
        prop_assume!(g.iter().map(|v| v * v).sum::<f64>() > 1e-6);
        let h = DampedHessian::new(spd(6, &a), 17).unwrap();
        let scaled: Vec<f64> = g.iter().map(|v| alpha * v).collect();
        let base = relatif(&h, &g, &t).unwrap();
        let after = relatif(&h, &scaled, &t).unwrap();
        prop_assert!((base - after).abs() <= 1e-10 * base.abs().max(1.0));
    }

    #[test]
    fn similarity_is_symmetric_square_of_scaled_influence((a, g, t) in case(6)) {
        let h = DampedHessian::new(spd(6, &a), 9).unwrap();
        let s_ij = similarity(&h, &g, &t).unwrap();
        let s_ji = similarity(&h, &t, &g).unwrap();
        prop_assert_eq!(s_ij, s_ji);
        prop_assert!(s_ij >= 0.0);
        let ni = 9.0 * influence(&h, &g, &t).unwrap();
        prop_assert!((s_ij - ni * ni).abs() <= 1e-9 * s_ij.max(1e-12));
    }

    #[test]
    fn lees_is_non_increasing_in_m((a, g, _t) in case(8), extra in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 8), 1..5)) {
        let spectrum = Spectrum::of(&spd(8, &a)).unwrap();
        let mut grads = extra;
        grads.push(g);
        let table = lees_table(&spectrum, &grads, 8).unwrap();
        for m in 0..8 {
            for t in 0..grads.len() {
                prop_assert!(table[m + 1][t] <= table[m][t]);
                let sub = ensemble_subspace(&spectrum, m).unwrap();
                prop_assert_eq!(lees_score(&sub, &grads[t]).unwrap(), table[m][t]);
            }
        }
        prop_assert_eq!(table[8].iter().all(|v| *v == 0.0), true);
    }
}
