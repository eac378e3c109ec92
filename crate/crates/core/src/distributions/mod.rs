//! Samplers and exact enumerators for the data distributions under study.
//!
//! Every spec validates itself when it is constructed (including when it is
//! deserialized), so sampling never fails on a spec that exists.

mod enumerate;
mod linear;
mod mixture;
mod parity;

pub use enumerate::{enumerate, WeightedSupport, MAX_SUPPORT};
pub use linear::LinearSpec;
pub use mixture::{MixtureComponent, MoGSpec, XorGmmSpec};
pub use parity::{Dictionary, ParitySpec, UniformParitySpec};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::net::Batch;
use crate::rng;

/// The five distribution families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum DataSpec {
    Mixture(MoGSpec),
    XorGmm(XorGmmSpec),
    Parity(ParitySpec),
    UniformParity(UniformParitySpec),
    Linear(LinearSpec),
}

/// Per-sample latent variables that determine the label.
#[derive(Clone, Debug, PartialEq)]
pub enum Latent {
    /// Index of the mixture component each sample came from.
    Components(Vec<usize>),
    /// Hidden representation `φ` (one row per sample), with `x = Mφ`.
    Phi(Array2<f64>),
    /// Uniform-parity inputs are their own latent variables.
    Cube,
    /// Signed margin `c` along `w*` for linear data.
    Margins(Array1<f64>),
}

#[derive(Clone, Debug)]
pub struct LabelledSample {
    pub batch: Batch,
    pub latent: Latent,
}

impl DataSpec {
    pub fn d(&self) -> usize {
        match self {
            DataSpec::Mixture(s) => s.d(),
            DataSpec::XorGmm(s) => s.d(),
            DataSpec::Parity(s) => s.d(),
            DataSpec::UniformParity(s) => s.d(),
            DataSpec::Linear(s) => s.d(),
        }
    }

    pub fn variant_tag(&self) -> &'static str {
        match self {
            DataSpec::Mixture(_) => "mixture",
            DataSpec::XorGmm(_) => "xor_gmm",
            DataSpec::Parity(_) => "parity",
            DataSpec::UniformParity(_) => "uniform_parity",
            DataSpec::Linear(_) => "linear",
        }
    }

    /// `n` i.i.d. draws, fully determined by `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Batch> {
        Ok(self.sample_with_latent(n, seed)?.batch)
    }

    pub fn sample_with_latent(&self, n: usize, seed: u64) -> Result<LabelledSample> {
        let mut rng = rng::stream(seed, "sample", 0);
        match self {
            DataSpec::Mixture(s) => s.sample(n, &mut rng),
            DataSpec::XorGmm(s) => s.to_mixture().sample(n, &mut rng),
            DataSpec::Parity(s) => s.sample(n, &mut rng),
            DataSpec::UniformParity(s) => s.sample(n, &mut rng),
            DataSpec::Linear(s) => s.sample(n, &mut rng),
        }
    }

    /// Recomputes the label of every sample from its latent variables alone.
    pub fn relabel(&self, latent: &Latent) -> Option<Vec<f64>> {
        match (self, latent) {
            (DataSpec::Mixture(s), Latent::Components(c)) => Some(c.iter().map(|&j| s.components()[j].label()).collect()),
            (DataSpec::XorGmm(s), Latent::Components(c)) => {
                let mix = s.to_mixture();
                Some(c.iter().map(|&j| mix.components()[j].label()).collect())
            }
            (DataSpec::Parity(s), Latent::Phi(phi)) => Some(phi.rows().into_iter().map(|row| s.label_of_phi(row)).collect()),
            (DataSpec::Linear(_), Latent::Margins(c)) => Some(c.iter().map(|&v| v.signum()).collect()),
            _ => None,
        }
    }
}

pub(crate) fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(crate::error::Error::InvalidSpec(msg()))
    }
}
