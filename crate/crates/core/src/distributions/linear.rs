use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check, LabelledSample, Latent};
use crate::error::Result;
use crate::net::Batch;
use crate::rng::Rng;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLinear {
    d: usize,
    #[serde(default)]
    w_star: Option<Vec<f64>>,
    beta: f64,
}

/// Linearly separable data with margin `β` along the unit direction `w*`.
///
/// Samples are `x = s·c·w* + P_{w*⊥} g` with `s = y` uniform on `{±1}`,
/// `c ~ U[β, 3β]` and `g` standard Gaussian, so `ρ = E[y⟨w*,x⟩] = 2β`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLinear")]
pub struct LinearSpec {
    d: usize,
    w_star: Vec<f64>,
    beta: f64,
}

impl TryFrom<RawLinear> for LinearSpec {
    type Error = crate::error::Error;
    fn try_from(raw: RawLinear) -> Result<Self> {
        LinearSpec::new(raw.d, raw.w_star, raw.beta)
    }
}

impl LinearSpec {
    /// `w_star` defaults to `e₁` and must have unit norm within `1e-9`.
    pub fn new(d: usize, w_star: Option<Vec<f64>>, beta: f64) -> Result<Self> {
        check(d >= 1, || "d must be positive".into())?;
        check(beta > 0.0 && beta.is_finite(), || format!("beta must be positive, got {beta}"))?;
        let w_star = w_star.unwrap_or_else(|| {
            let mut e = vec![0.0; d];
            e[0] = 1.0;
            e
        });
        check(w_star.len() == d, || format!("w_star has length {}, expected {d}", w_star.len()))?;
        let norm = w_star.iter().map(|v| v * v).sum::<f64>().sqrt();
        check((norm - 1.0).abs() < 1e-9, || format!("w_star must be a unit vector, norm is {norm}"))?;
        Ok(Self { d, w_star, beta })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn w_star(&self) -> Array1<f64> {
        Array1::from(self.w_star.clone())
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `ρ = E[y⟨w*, x⟩]`.
    pub fn rho(&self) -> f64 {
        2.0 * self.beta
    }

    pub(crate) fn sample(&self, n: usize, rng: &mut Rng) -> Result<LabelledSample> {
        let w = self.w_star();
        let mut xs = Array2::zeros((n, self.d));
        let mut ys = Array1::zeros(n);
        let mut margins = Array1::zeros(n);
        for l in 0..n {
            let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let c = rng.random_range(self.beta..=3.0 * self.beta);
            let g = Array1::from_shape_simple_fn(self.d, || StandardNormal.sample(rng));
            let mut x = &g - &(&w * g.dot(&w));
            x.scaled_add(s * c, &w);
            // Rounding can pull the realized margin a hair under β.
            loop {
                let gap = self.beta - s * x.dot(&w);
                if gap <= 0.0 {
                    break;
                }
                x.scaled_add(s * (gap + f64::EPSILON * self.beta), &w);
            }
            xs.row_mut(l).assign(&x);
            ys[l] = s;
            margins[l] = s * c;
        }
        Ok(LabelledSample { batch: Batch::new(xs, ys)?, latent: Latent::Margins(margins) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(LinearSpec::new(3, None, 0.0).is_err());
        assert!(LinearSpec::new(3, Some(vec![1.0, 1.0, 0.0]), 0.5).is_err());
        assert!(LinearSpec::new(3, Some(vec![1.0, 0.0]), 0.5).is_err());
        let s = LinearSpec::new(3, None, 0.5).unwrap();
        assert_eq!(s.rho(), 1.0);
        assert_eq!(s.w_star()[0], 1.0);
    }
}
