use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1};

use super::{DataSpec, ParitySpec, UniformParitySpec};
use crate::error::{Error, Result};

/// Largest support `enumerate` will materialize.
pub const MAX_SUPPORT: u128 = 1 << 24;

/// A finite distribution: point `xs[i]` with label `ys[i]` has probability
/// `weights[i]`.
#[derive(Clone, Debug)]
pub struct WeightedSupport {
    pub xs: Array2<f64>,
    pub ys: Array1<f64>,
    pub weights: Array1<f64>,
}

impl WeightedSupport {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn d(&self) -> usize {
        self.xs.ncols()
    }

    /// `E[f(x, y)]`.
    pub fn expectation(&self, mut f: impl FnMut(ArrayView1<'_, f64>, f64) -> f64) -> f64 {
        self.xs
            .rows()
            .into_iter()
            .zip(self.ys.iter().zip(self.weights.iter()))
            .map(|(x, (&y, &w))| w * f(x, y))
            .sum()
    }
}

/// Every support point of a discrete distribution with its exact probability.
pub fn enumerate(spec: &DataSpec) -> Result<WeightedSupport> {
    match spec {
        DataSpec::UniformParity(s) => enumerate_uniform(s),
        DataSpec::Parity(s) => enumerate_parity(s),
        other => Err(Error::arg("spec", format!("`{}` has a continuous distribution", other.variant_tag()))),
    }
}

fn check_size(size: u128) -> Result<()> {
    if size > MAX_SUPPORT {
        Err(Error::SupportTooLarge { size, limit: MAX_SUPPORT })
    } else {
        Ok(())
    }
}

fn pow_u128(base: u128, exp: usize) -> u128 {
    (0..exp).fold(1u128, |acc, _| acc.saturating_mul(base))
}

fn enumerate_uniform(s: &UniformParitySpec) -> Result<WeightedSupport> {
    let d = s.d();
    check_size(pow_u128(2, d))?;
    let n = 1usize << d;
    let mut xs = Array2::zeros((n, d));
    for i in 0..n {
        for j in 0..d {
            xs[[i, j]] = if (i >> j) & 1 == 1 { -1.0 } else { 1.0 };
        }
    }
    let ys = Array1::from_iter(xs.rows().into_iter().map(|row| s.label(row)));
    let weights = Array1::from_elem(n, 1.0 / n as f64);
    Ok(WeightedSupport { xs, ys, weights })
}

fn enumerate_parity(s: &ParitySpec) -> Result<WeightedSupport> {
    let d = s.d();
    let rk = s.r() * s.k();
    let p_u = 1.0 - 2.0 * s.r() as f64 * s.p_a();
    let p_o = s.p_o();

    let mut block_patterns: Vec<(Vec<i8>, f64)> = Vec::new();
    if p_u > 0.0 {
        let count = pow_u128(2, rk);
        check_size(count)?;
        let w = p_u / count as f64;
        for i in 0..count as usize {
            block_patterns.push(((0..rk).map(|c| if (i >> c) & 1 == 1 { -1 } else { 1 }).collect(), w));
        }
    }
    if s.p_a() > 0.0 {
        for j in 0..s.r() {
            for sign in [1i8, -1] {
                let mut v = vec![0i8; rk];
                for c in s.block(j) {
                    v[c] = sign;
                }
                block_patterns.push((v, s.p_a()));
            }
        }
    }

    let mut noise_values: Vec<(i8, f64)> = Vec::new();
    if p_o > 0.0 {
        noise_values.push((1, p_o));
        noise_values.push((-1, p_o));
    }
    if p_o < 0.5 {
        noise_values.push((0, 1.0 - 2.0 * p_o));
    }
    let noise_count = pow_u128(noise_values.len() as u128, d - rk);
    check_size((block_patterns.len() as u128).saturating_mul(noise_count))?;

    let mut merged: BTreeMap<Vec<i8>, f64> = BTreeMap::new();
    let off = d - rk;
    for (pattern, pw) in &block_patterns {
        for idx in 0..noise_count as usize {
            let mut phi = pattern.clone();
            let mut rest = idx;
            let mut w = *pw;
            for _ in 0..off {
                let (v, p) = noise_values[rest % noise_values.len()];
                rest /= noise_values.len();
                phi.push(v);
                w *= p;
            }
            *merged.entry(phi).or_insert(0.0) += w;
        }
    }

    let n = merged.len();
    let mut phi = Array2::zeros((n, d));
    let mut weights = Array1::zeros(n);
    for (i, (key, w)) in merged.into_iter().enumerate() {
        for (c, v) in key.into_iter().enumerate() {
            phi[[i, c]] = f64::from(v);
        }
        weights[i] = w;
    }
    let ys = Array1::from_iter(phi.rows().into_iter().map(|row| s.label_of_phi(row)));
    Ok(WeightedSupport { xs: s.embed(&phi), ys, weights })
}

#[cfg(test)]
mod tests {
    use super::super::Dictionary;
    use super::*;

    #[test]
    fn uniform_parity_is_balanced() {
        let spec = DataSpec::UniformParity(UniformParitySpec::new(8, 4, None).unwrap());
        let sup = enumerate(&spec).unwrap();
        assert_eq!(sup.len(), 256);
        assert_eq!(sup.expectation(|_, y| y), 0.0);
        assert!((sup.weights.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parity_mixture_merges_duplicates() {
        let s = ParitySpec::new(5, 1, 3, 0.25, 0.25, Dictionary::Identity).unwrap();
        let sup = enumerate(&DataSpec::Parity(s)).unwrap();
        // Strong patterns (+,+,+) and (−,−,−) coincide with cube points.
        assert_eq!(sup.len(), 8 * 9);
        assert!((sup.weights.sum() - 1.0).abs() < 1e-12);
        let ppos = sup.expectation(|_, y| if y > 0.0 { 1.0 } else { 0.0 });
        assert!((ppos - 0.5).abs() < 1e-12);
    }

    #[test]
    fn refuses_large_supports() {
        let spec = DataSpec::UniformParity(UniformParitySpec::new(30, 4, None).unwrap());
        assert!(matches!(enumerate(&spec), Err(Error::SupportTooLarge { .. })));
    }
}
