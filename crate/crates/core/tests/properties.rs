use featlab_core::distributions::{DataSpec, XorGmmSpec};
use featlab_core::gradfeat::*;
use featlab_core::net::{self, init_symmetric, LossKind, NetworkParams};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn unit(v: Vec<f64>) -> Option<Array1<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 1e-3).then(|| Array1::from(v) / n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn symmetric_init_outputs_zero(m in 1usize..12, d in 1usize..20, seed in any::<u64>(),
                                   b in -3.0f64..3.0, sw in 0.05f64..3.0) {
        let p = init_symmetric(m, d, 1.0, sw, b, seed).unwrap();
        let xs = Array2::from_shape_fn((16, d), |(i, j)| ((i * 31 + j * 7) % 13) as f64 - 6.0);
        let f = p.forward_batch(xs.view()).unwrap();
        prop_assert!(f.iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn forward_is_positively_homogeneous(seed in any::<u64>(), c in 0.1f64..10.0) {
        let p = init_symmetric(2, 4, 1.0, 1.0, 0.3, seed).unwrap();
        let a = p.a().to_owned() + 0.1;
        let p = p.with_a(a).unwrap();
        let scaled = NetworkParams::from_parts(p.a().to_owned(), &p.w() * c, &p.b() * c).unwrap();
        let x = Array1::from(vec![0.3, -1.2, 0.8, 2.0]);
        let (f, g) = (p.forward(x.view()).unwrap(), scaled.forward(x.view()).unwrap());
        prop_assert!((g - c * f).abs() <= 1e-9 * (1.0 + f.abs() * c));
    }

    #[test]
    fn regularization_adds_lambda_times_params(seed in any::<u64>(), lambda in 0.0f64..1.0) {
        let spec = DataSpec::XorGmm(XorGmmSpec::new(3, 1.0, None).unwrap());
        let p = init_symmetric(2, 3, 1.0, 1.0, 0.2, seed).unwrap();
        let batch = spec.sample(20, seed).unwrap();
        let g0 = net::batch_gradients(&p, &batch, LossKind::Logistic, 0.0).unwrap();
        let g = net::batch_gradients(&p, &batch, LossKind::Logistic, lambda).unwrap();
        for (x, (y, w)) in g.w.iter().zip(g0.w.iter().zip(p.w().iter())) {
            prop_assert!((x - y - lambda * w).abs() <= 1e-12);
        }
    }

    #[test]
    fn cone_is_scale_invariant(d in proptest::collection::vec(-1.0f64..1.0, 5),
                               v in proptest::collection::vec(-1.0f64..1.0, 5),
                               gamma in 0.01f64..0.99, c in 1e-3f64..1e3) {
        if let Some(dir) = unit(d) {
            let v = Array1::from(v);
            for kind in [NormKind::L2, NormKind::Linf] {
                prop_assert_eq!(cone_contains(dir.view(), gamma, kind, v.view()),
                                cone_contains(dir.view(), gamma, kind, (&v * c).view()));
            }
        }
    }

    #[test]
    fn cone_sign_symmetry(d in proptest::collection::vec(-1.0f64..1.0, 5),
                          v in proptest::collection::vec(-1.0f64..1.0, 5),
                          gamma in 0.01f64..0.99) {
        if let Some(dir) = unit(d) {
            let v = Array1::from(v);
            let neg_dir = -&dir;
            let neg_v = -&v;
            prop_assert_eq!(cone_contains(dir.view(), gamma, NormKind::L2, v.view()),
                            cone_contains(neg_dir.view(), gamma, NormKind::L2, neg_v.view()));
        }
    }

    #[test]
    fn census_is_monotone_in_gamma(seed in any::<u64>(), g1 in 0.05f64..0.95, g2 in 0.05f64..0.95) {
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let spec = DataSpec::XorGmm(XorGmmSpec::new(4, 0.5, None).unwrap());
        let p = init_symmetric(8, 4, 1.0, 1.0, 0.5, seed).unwrap();
        let batch = spec.sample(64, seed).unwrap();
        let g = net::batch_gradients(&p, &batch, LossKind::Hinge, 0.0).unwrap();
        let dirs = direction_catalog(&spec);
        let small = nice_set_census(&p, g.w.view(), &dirs, lo, 1e-3, None, NormKind::L2).unwrap();
        let large = nice_set_census(&p, g.w.view(), &dirs, hi, 1e-3, None, NormKind::L2).unwrap();
        for (s, l) in small.entries.iter().zip(&large.entries) {
            prop_assert!(s.indices.iter().all(|i| l.indices.contains(i)));
            prop_assert!(s.indices.iter().all(|&i| i < 16));
            for &i in &s.indices {
                let sign = if p.b()[i] >= 0.0 { 1 } else { -1 };
                prop_assert_eq!(sign, s.sign);
            }
        }
    }

    #[test]
    fn wilson_interval_brackets_estimate(hits in 0usize..1000, extra in 1usize..1000) {
        let trials = hits + extra;
        let (lo, hi) = wilson_interval(hits, trials, 1.95996);
        let p = hits as f64 / trials as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }
}
