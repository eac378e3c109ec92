use featlab_core::distributions::{DataSpec, XorGmmSpec};
use featlab_core::net::{self, init_symmetric, LossKind, Reduction};
use featlab_core::oracle;
use featlab_core::trainer::*;

fn spec() -> DataSpec {
    DataSpec::XorGmm(XorGmmSpec::new(6, 0.5, None).unwrap())
}

fn sched(steps: usize) -> HyperSchedule {
    HyperSchedule {
        eta_1: 1.5,
        eta: 0.05,
        lambda_1: None,
        steps,
        batch_size: 64,
        freeze_first_layer_after_step1: false,
        fresh_batch_per_step: true,
    }
}

#[test]
fn first_step_forgets_initial_weights() {
    let spec = spec();
    for seed in 0..5 {
        let p0 = init_symmetric(6, 6, 1.0, 1.0, 0.5, seed).unwrap();
        let batch = spec.sample(64, seed).unwrap();
        let s = sched(1);
        let first = first_step(&p0, &batch, &s, LossKind::Hinge, &TrainOptions::default()).unwrap();
        for (w1, g) in first.params1.w().iter().zip(first.grads.w.iter()) {
            assert!((w1 + s.eta_1 * g).abs() <= 1e-12);
        }
        for (a1, g) in first.params1.a().iter().zip(first.grads.a.iter()) {
            assert!((a1 + s.eta_1 * g).abs() <= 1e-12);
        }
        assert_eq!(first.params1.b(), p0.b());
    }
}

#[test]
fn lambda_override_keeps_part_of_init() {
    let p0 = init_symmetric(2, 6, 1.0, 1.0, 0.5, 1).unwrap();
    let batch = spec().sample(32, 1).unwrap();
    let mut s = sched(1);
    s.lambda_1 = Some(0.0);
    let first = first_step(&p0, &batch, &s, LossKind::Hinge, &TrainOptions::default()).unwrap();
    let expected = &p0.w() - &(s.eta_1 * &first.grads.w);
    assert_eq!(first.params1.w(), expected.view());
}

#[test]
fn single_step_run() {
    let p0 = init_symmetric(4, 6, 1.0, 1.0, 0.5, 2).unwrap();
    let eval = spec().sample(100, 99).unwrap();
    let run = train(&p0, DataSource::Distribution { spec: &spec(), seed: 2 }, &sched(1), LossKind::Hinge, &eval, &TrainOptions::default())
        .unwrap();
    assert_eq!(run.outcome.trace.records.len(), 1);
    assert_eq!(run.outcome.trace.best_iterate().t, 1);
    assert_eq!(run.outcome.best, run.first.params1);
    assert_eq!(run.outcome.last, run.first.params1);
}

#[test]
fn runs_are_bitwise_reproducible() {
    let p0 = init_symmetric(4, 6, 1.0, 1.0, 0.5, 3).unwrap();
    let eval = spec().sample(100, 98).unwrap();
    let go = || {
        train(&p0, DataSource::Distribution { spec: &spec(), seed: 3 }, &sched(40), LossKind::Logistic, &eval, &TrainOptions::default())
            .unwrap()
    };
    let (a, b) = (go(), go());
    assert_eq!(a.outcome.last, b.outcome.last);
    assert_eq!(a.outcome.trace, b.outcome.trace);
    assert_eq!(a.outcome.trace.to_csv().unwrap(), b.outcome.trace.to_csv().unwrap());
}

#[test]
fn frozen_first_layer_never_moves() {
    let p0 = init_symmetric(4, 6, 1.0, 1.0, 0.5, 4).unwrap();
    let eval = spec().sample(100, 97).unwrap();
    let data = DataSource::Distribution { spec: &spec(), seed: 4 };
    let opts = TrainOptions { freeze_first_layer: true, ..TrainOptions::default() };
    let run = train(&p0, data, &sched(30), LossKind::Hinge, &eval, &opts).unwrap();
    assert_eq!(run.outcome.last.w(), p0.w());
    assert!(run.outcome.trace.records.iter().all(|r| r.w_drift == 0.0));

    let mut s = sched(30);
    s.freeze_first_layer_after_step1 = true;
    let run = train(&p0, data, &s, LossKind::Hinge, &eval, &TrainOptions::default()).unwrap();
    assert_eq!(run.outcome.last.w(), run.first.params1.w());
    assert_ne!(run.outcome.last.a(), run.first.params1.a());
}

#[test]
fn zero_one_error_is_below_hinge_loss() {
    let p0 = init_symmetric(4, 6, 1.0, 1.0, 0.5, 5).unwrap();
    let eval = spec().sample(300, 96).unwrap();
    let run = train(&p0, DataSource::Distribution { spec: &spec(), seed: 5 }, &sched(60), LossKind::Hinge, &eval, &TrainOptions::default())
        .unwrap();
    for r in &run.outcome.trace.records {
        assert!(r.error <= r.loss + 1e-12, "t={} error {} loss {}", r.t, r.error, r.loss);
    }
    let best = run.outcome.trace.best_iterate();
    assert!(run.outcome.trace.records.iter().all(|r| r.error >= best.error));
    assert_eq!(eval_error(&run.outcome.best, &eval).unwrap(), best.error);
}

#[test]
fn flipped_labels_negate_gradients_at_init() {
    let p0 = init_symmetric(3, 6, 1.0, 1.0, 0.5, 6).unwrap();
    let batch = spec().sample(50, 6).unwrap();
    for kind in [LossKind::Hinge, LossKind::Logistic] {
        let g = net::batch_gradients(&p0, &batch, kind, 0.0).unwrap();
        let f = net::batch_gradients(&p0, &batch.flipped(), kind, 0.0).unwrap();
        for (x, y) in g.a.iter().zip(f.a.iter()).chain(g.w.iter().zip(f.w.iter())) {
            assert!((x + y).abs() <= 1e-14);
        }
    }
}

#[test]
fn parallel_reduction_agrees() {
    let p0 = init_symmetric(3, 6, 1.0, 1.0, 0.5, 7).unwrap();
    let batch = spec().sample(1000, 7).unwrap();
    let s = net::batch_gradients_with(&p0, &batch, LossKind::Logistic, 0.1, Reduction::Sequential).unwrap();
    let p = net::batch_gradients_with(&p0, &batch, LossKind::Logistic, 0.1, Reduction::Parallel).unwrap();
    for (x, y) in s.w.iter().zip(p.w.iter()).chain(s.a.iter().zip(p.a.iter())) {
        assert!((x - y).abs() <= 1e-12);
    }
}

#[test]
fn fixed_batch_source() {
    let batch = spec().sample(64, 8).unwrap();
    let src = DataSource::Fixed(&batch);
    assert_eq!(src.batch(1, 64, true).unwrap().as_ref(), &batch);
    assert_eq!(src.batch(9, 64, false).unwrap().as_ref(), &batch);
    let fresh = DataSource::Distribution { spec: &spec(), seed: 8 };
    assert_ne!(fresh.batch(1, 16, true).unwrap().as_ref(), fresh.batch(2, 16, true).unwrap().as_ref());
    assert_eq!(fresh.batch(1, 16, false).unwrap().as_ref(), fresh.batch(2, 16, false).unwrap().as_ref());
}

#[test]
fn masked_training_is_a_genuine_subnetwork() {
    let p0 = init_symmetric(4, 6, 1.0, 1.0, 0.5, 9).unwrap();
    let eval = spec().sample(200, 95).unwrap();
    let data = DataSource::Distribution { spec: &spec(), seed: 9 };
    let run = train(&p0, data, &sched(20), LossKind::Hinge, &eval, &TrainOptions::default()).unwrap();
    let support = vec![0, 3, 5, 9, 14];
    let sub = oracle::train_subnetwork(&run.first, &support, data, &sched(20), LossKind::Hinge, &eval).unwrap();
    for i in 0..p0.width() {
        if !support.contains(&i) {
            assert_eq!(sub.last.a()[i], 0.0);
            assert_eq!(sub.last.w().column(i), run.first.params1.w().column(i));
        }
    }
    // Same result as masking the full-width network directly.
    let mask = (0..p0.width()).map(|i| support.contains(&i)).collect();
    let opts = TrainOptions { mask: Some(mask), ..TrainOptions::default() };
    let direct = continue_training(&run.first.params1, data, &sched(20), LossKind::Hinge, &eval, &opts).unwrap();
    let f_sub = sub.last.forward_batch(eval.xs()).unwrap();
    let f_direct = direct.last.forward_batch(eval.xs()).unwrap();
    for (x, y) in f_sub.iter().zip(&f_direct) {
        assert!((x - y).abs() <= 1e-9);
    }
}

#[test]
fn trace_csv_has_header_and_rows() {
    let p0 = init_symmetric(2, 6, 1.0, 1.0, 0.5, 10).unwrap();
    let eval = spec().sample(50, 94).unwrap();
    let run = train(&p0, DataSource::Distribution { spec: &spec(), seed: 10 }, &sched(5), LossKind::Hinge, &eval, &TrainOptions::default())
        .unwrap();
    let csv = run.outcome.trace.to_csv().unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,loss,error,a_norm,w_drift");
    assert_eq!(lines.count(), 5);
}

#[test]
fn baseline_with_zero_steps_evaluates_init() {
    let p0 = init_symmetric(2, 6, 1.0, 1.0, 0.5, 11).unwrap();
    let eval = spec().sample(50, 93).unwrap();
    let mut s = sched(1);
    s.steps = 0;
    let out = oracle::random_feature_baseline(&p0, DataSource::Fixed(&eval), &s, LossKind::Hinge, &eval).unwrap();
    assert_eq!(out.best, p0);
    // f = 0 predicts +1 everywhere.
    let pos = eval.ys().iter().filter(|&&y| y > 0.0).count() as f64 / 50.0;
    assert_eq!(out.trace.best_iterate().error, 1.0 - pos);
}
