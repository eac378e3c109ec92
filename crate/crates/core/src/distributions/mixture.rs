use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check, LabelledSample, Latent};
use crate::error::Result;
use crate::net::Batch;
use crate::rng::Rng;

/// One isotropic Gaussian component `N(μ, σ² I)` attached to a label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub mean: Vec<f64>,
    /// Per-coordinate standard deviation.
    pub sigma: f64,
    /// Weight within the component's class.
    pub weight: f64,
    pub label: i8,
}

impl MixtureComponent {
    pub fn label(&self) -> f64 {
        f64::from(self.label)
    }

    pub fn mean_norm(&self) -> f64 {
        self.mean.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unit direction `μ / ‖μ‖`.
    pub fn direction(&self) -> Array1<f64> {
        let n = self.mean_norm();
        Array1::from_iter(self.mean.iter().map(|v| v / n))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMoG {
    components: Vec<MixtureComponent>,
    #[serde(default = "half")]
    class_prior_pos: f64,
}

fn half() -> f64 {
    0.5
}

/// Mixture of isotropic Gaussians, `q(x|y) = Σ_{j∈S(y)} p_j N_j(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMoG")]
pub struct MoGSpec {
    components: Vec<MixtureComponent>,
    class_prior_pos: f64,
}

impl TryFrom<RawMoG> for MoGSpec {
    type Error = crate::error::Error;
    fn try_from(raw: RawMoG) -> Result<Self> {
        MoGSpec::new(raw.components, raw.class_prior_pos)
    }
}

impl MoGSpec {
    pub fn new(components: Vec<MixtureComponent>, class_prior_pos: f64) -> Result<Self> {
        check(!components.is_empty(), || "mixture needs at least one component".into())?;
        let d = components[0].mean.len();
        check(d > 0, || "component means must be nonempty".into())?;
        check((0.0..=1.0).contains(&class_prior_pos), || format!("class prior {class_prior_pos} outside [0, 1]"))?;
        for (j, c) in components.iter().enumerate() {
            check(c.mean.len() == d, || format!("component {j} has dimension {} != {d}", c.mean.len()))?;
            check(c.mean.iter().all(|v| v.is_finite()), || format!("component {j} mean is not finite"))?;
            check(c.sigma > 0.0 && c.sigma.is_finite(), || format!("component {j} sigma must be positive"))?;
            check(c.weight > 0.0, || format!("component {j} weight must be positive"))?;
            check(c.label == 1 || c.label == -1, || format!("component {j} label must be +1 or -1"))?;
        }
        for (label, prior) in [(1i8, class_prior_pos), (-1i8, 1.0 - class_prior_pos)] {
            let total: f64 = components.iter().filter(|c| c.label == label).map(|c| c.weight).sum();
            if prior > 0.0 {
                check((total - 1.0).abs() < 1e-9, || format!("weights of class {label:+} sum to {total}, not 1"))?;
            }
        }
        Ok(Self { components, class_prior_pos })
    }

    pub fn d(&self) -> usize {
        self.components[0].mean.len()
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn class_prior_pos(&self) -> f64 {
        self.class_prior_pos
    }

    /// Overall probability of component `j`: class prior times in-class weight.
    pub fn component_probability(&self, j: usize) -> f64 {
        let c = &self.components[j];
        let prior = if c.label == 1 { self.class_prior_pos } else { 1.0 - self.class_prior_pos };
        prior * c.weight
    }

    pub fn sigma_max(&self) -> f64 {
        self.components.iter().map(|c| c.sigma).fold(0.0, f64::max)
    }

    pub(crate) fn sample(&self, n: usize, rng: &mut Rng) -> Result<LabelledSample> {
        let d = self.d();
        let mut xs = Array2::zeros((n, d));
        let mut ys = Array1::zeros(n);
        let mut comps = Vec::with_capacity(n);
        let pos: Vec<usize> = (0..self.components.len()).filter(|&j| self.components[j].label == 1).collect();
        let neg: Vec<usize> = (0..self.components.len()).filter(|&j| self.components[j].label == -1).collect();
        for l in 0..n {
            let y_pos = rng.random::<f64>() < self.class_prior_pos;
            let pool = if y_pos { &pos } else { &neg };
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = *pool.last().expect("class with positive prior has components");
            for &j in pool {
                acc += self.components[j].weight;
                if u < acc {
                    chosen = j;
                    break;
                }
            }
            let c = &self.components[chosen];
            for (r, &mu) in c.mean.iter().enumerate() {
                let g: f64 = StandardNormal.sample(rng);
                xs[[l, r]] = mu + c.sigma * g;
            }
            ys[l] = c.label();
            comps.push(chosen);
        }
        Ok(LabelledSample { batch: Batch::new(xs, ys)?, latent: Latent::Components(comps) })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawXor {
    d: usize,
    sigma_b: f64,
    #[serde(default)]
    scale: Option<f64>,
}

/// Four isotropic clusters at `±μ₁`, `±μ₃` with `μ₁ ⟂ μ₃`; the `±μ₁`
/// clusters are labelled +1 and the `±μ₃` clusters −1. `μ₁ = scale·e₁`,
/// `μ₃ = scale·e₂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawXor")]
pub struct XorGmmSpec {
    d: usize,
    sigma_b: f64,
    scale: f64,
}

impl TryFrom<RawXor> for XorGmmSpec {
    type Error = crate::error::Error;
    fn try_from(raw: RawXor) -> Result<Self> {
        XorGmmSpec::new(raw.d, raw.sigma_b, raw.scale)
    }
}

impl XorGmmSpec {
    /// `scale` defaults to `√d`.
    pub fn new(d: usize, sigma_b: f64, scale: Option<f64>) -> Result<Self> {
        check(d >= 2, || format!("XOR mixture needs d >= 2, got {d}"))?;
        check(sigma_b > 0.0 && sigma_b.is_finite(), || "sigma_b must be positive".into())?;
        let scale = scale.unwrap_or((d as f64).sqrt());
        check(scale > 0.0 && scale.is_finite(), || "scale must be positive".into())?;
        Ok(Self { d, sigma_b, scale })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn sigma_b(&self) -> f64 {
        self.sigma_b
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn to_mixture(&self) -> MoGSpec {
        let axis = |i: usize, sign: f64| {
            let mut v = vec![0.0; self.d];
            v[i] = sign * self.scale;
            v
        };
        let comp = |mean, label| MixtureComponent { mean, sigma: self.sigma_b, weight: 0.5, label };
        MoGSpec::new(
            vec![comp(axis(0, 1.0), 1), comp(axis(0, -1.0), 1), comp(axis(1, 1.0), -1), comp(axis(1, -1.0), -1)],
            0.5,
        )
        .expect("XOR mixture is valid by construction")
    }
}
