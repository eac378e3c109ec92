use featlab_core::distributions::{enumerate, DataSpec, LinearSpec, UniformParitySpec};
use featlab_core::gradfeat::{
    simplified_gradient, uniform_parity_gradient_formula, FeatureSource, SampleCount,
};
use featlab_core::rng;
use ndarray::Array1;
use rand::Rng;

fn brute_force_gradient(spec: &UniformParitySpec, w: &Array1<f64>, b: f64) -> Array1<f64> {
    let d = spec.d();
    let mut g = Array1::zeros(d);
    for mask in 0..1usize << d {
        let x = Array1::from_shape_fn(d, |j| if (mask >> j) & 1 == 1 { 1.0 } else { -1.0 });
        let y: f64 = spec.support().iter().map(|&l| x[l]).product();
        if x.dot(w) > b {
            g.scaled_add(y / (1usize << d) as f64, &x);
        }
    }
    g
}

#[test]
fn uniform_parity_closed_form_matches_enumeration() {
    for (d, k) in [(10, 4), (9, 4), (8, 2)] {
        let spec = UniformParitySpec::new(d, k, None).unwrap();
        let sup = enumerate(&DataSpec::UniformParity(spec.clone())).unwrap();
        let mut r = rng::stream(11, "test", d as u64);
        for _ in 0..20 {
            let w = Array1::from_shape_fn(d, |_| if r.random::<bool>() { 1.0 } else { -1.0 });
            let b = r.random_range(-0.99..0.99);
            let exact = simplified_gradient(w.view(), b, FeatureSource::Exact(&sup)).unwrap();
            assert_eq!(exact.n_used, SampleCount::Exact);
            let formula = uniform_parity_gradient_formula(spec.support(), w.view());
            let brute = brute_force_gradient(&spec, &w, b);
            for j in 0..d {
                assert!((exact.g[j] - formula[j]).abs() < 1e-12, "d={d} j={j}");
                assert!((brute[j] - formula[j]).abs() < 1e-12, "d={d} j={j}");
            }
        }
    }
}

#[test]
fn linear_always_on_gradient_is_rho_w_star() {
    let spec = LinearSpec::new(20, None, 0.5).unwrap();
    let batch = DataSpec::Linear(spec.clone()).sample(100_000, 3).unwrap();
    let w = Array1::zeros(20);
    let est = simplified_gradient(w.view(), -1e6, FeatureSource::Batch(&batch)).unwrap();
    let cos = est.g.dot(&spec.w_star()) / est.norm;
    assert!(cos >= 0.99, "cosine {cos}");
    assert!((est.norm - spec.rho()).abs() < 3.0 * est.std_err[0] + 0.02);
}

#[test]
fn zero_labels_give_zero_gradient() {
    let spec = LinearSpec::new(5, None, 0.5).unwrap();
    let (xs, ys) = DataSpec::Linear(spec).sample(50, 1).unwrap().into_parts();
    let batch = featlab_core::net::Batch::new(xs, ys.mapv(|_| 0.0)).unwrap();
    let est = simplified_gradient(Array1::ones(5).view(), 0.0, FeatureSource::Batch(&batch)).unwrap();
    assert!(est.g.iter().all(|&v| v == 0.0));
    assert_eq!(est.norm, 0.0);
}
