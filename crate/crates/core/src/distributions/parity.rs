use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check, LabelledSample, Latent};
use crate::error::Result;
use crate::net::Batch;
use crate::rng::{self, Rng};

/// The orthonormal dictionary `M` mapping latent `φ` to inputs `x = Mφ`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dictionary {
    #[default]
    Identity,
    /// Gram–Schmidt orthonormalization of a seeded Gaussian matrix.
    Random { seed: u64 },
    /// Explicit columns `M_1, …, M_d`.
    Explicit { columns: Vec<Vec<f64>> },
}

impl Dictionary {
    fn materialize(&self, d: usize) -> Result<Option<Array2<f64>>> {
        let m = match self {
            Dictionary::Identity => return Ok(None),
            Dictionary::Random { seed } => {
                let mut rng = rng::stream(*seed, "dictionary", 0);
                let g = Array2::from_shape_simple_fn((d, d), || StandardNormal.sample(&mut rng));
                gram_schmidt(g)
            }
            Dictionary::Explicit { columns } => {
                check(columns.len() == d, || format!("dictionary has {} columns, expected {d}", columns.len()))?;
                let mut m = Array2::zeros((d, d));
                for (j, col) in columns.iter().enumerate() {
                    check(col.len() == d, || format!("dictionary column {j} has length {}", col.len()))?;
                    for (i, &v) in col.iter().enumerate() {
                        m[[i, j]] = v;
                    }
                }
                m
            }
        };
        let err = orthonormality_error(&m);
        check(err <= 1e-10, || format!("dictionary is not orthonormal: max |MᵀM − I| = {err:e}"))?;
        Ok(Some(m))
    }
}

/// Modified Gram–Schmidt on the columns, applied twice for stability.
fn gram_schmidt(mut m: Array2<f64>) -> Array2<f64> {
    let d = m.ncols();
    for _ in 0..2 {
        for j in 0..d {
            for i in 0..j {
                let proj = m.column(i).dot(&m.column(j));
                let ci = m.column(i).to_owned();
                m.column_mut(j).scaled_add(-proj, &ci);
            }
            let norm = m.column(j).dot(&m.column(j)).sqrt();
            m.column_mut(j).mapv_inplace(|v| v / norm);
        }
    }
    m
}

/// `max |MᵀM − I|`.
pub(crate) fn orthonormality_error(m: &Array2<f64>) -> f64 {
    let g = m.t().dot(m);
    g.indexed_iter()
        .map(|((i, j), &v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParity {
    d: usize,
    r: usize,
    k: usize,
    p_a: f64,
    p_o: f64,
    #[serde(default)]
    dictionary: Dictionary,
}

/// Parity over a dictionary: `x = Mφ`, `y = sign(Σ_j Π_{l∈A_j} φ_l)` with
/// blocks `A_j = {jk, …, jk + k − 1}` (zero-based). The latent `φ` is drawn
/// from `(1 − 2rp_A)·X_U + Σ_j p_A (X_{j,+} + X_{j,−})`; off-support
/// coordinates are `±1` with probability `p_o` each and 0 otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParity")]
pub struct ParitySpec {
    d: usize,
    r: usize,
    k: usize,
    p_a: f64,
    p_o: f64,
    dictionary: Dictionary,
    #[serde(skip)]
    matrix: Option<Array2<f64>>,
}

impl TryFrom<RawParity> for ParitySpec {
    type Error = crate::error::Error;
    fn try_from(raw: RawParity) -> Result<Self> {
        ParitySpec::new(raw.d, raw.r, raw.k, raw.p_a, raw.p_o, raw.dictionary)
    }
}

impl ParitySpec {
    /// Validates `r·k ≤ d`, `2·r·p_A ≤ 1`, odd `r`, `p_o ≤ 1/2` and an
    /// orthonormal dictionary. Even `k` is accepted.
    pub fn new(d: usize, r: usize, k: usize, p_a: f64, p_o: f64, dictionary: Dictionary) -> Result<Self> {
        check(r >= 1 && k >= 1, || "r and k must be positive".into())?;
        check(r % 2 == 1, || format!("r must be odd, got {r}"))?;
        check(r * k <= d, || format!("r*k = {} exceeds d = {d}", r * k))?;
        check((0.0..=1.0).contains(&p_a) && 2.0 * r as f64 * p_a <= 1.0, || format!("need 0 <= p_a and 2*r*p_a <= 1, got p_a = {p_a}"))?;
        check((0.0..=0.5).contains(&p_o), || format!("p_o must lie in [0, 1/2], got {p_o}"))?;
        let matrix = dictionary.materialize(d)?;
        Ok(Self { d, r, k, p_a, p_o, dictionary, matrix })
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn r(&self) -> usize {
        self.r
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn p_a(&self) -> f64 {
        self.p_a
    }
    pub fn p_o(&self) -> f64 {
        self.p_o
    }
    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn is_identity(&self) -> bool {
        self.matrix.is_none()
    }

    /// The dictionary as a dense matrix.
    pub fn matrix(&self) -> Array2<f64> {
        self.matrix.clone().unwrap_or_else(|| Array2::eye(self.d))
    }

    /// Zero-based latent indices of block `j`.
    pub fn block(&self, j: usize) -> std::ops::Range<usize> {
        j * self.k..(j + 1) * self.k
    }

    /// `Σ_{l∈A_j} M_l`.
    pub fn block_sum(&self, j: usize) -> Array1<f64> {
        let mut dir = Array1::zeros(self.d);
        for l in self.block(j) {
            match &self.matrix {
                None => dir[l] += 1.0,
                Some(m) => dir += &m.column(l),
            }
        }
        dir
    }

    /// `D_j = Σ_{l∈A_j} M_l / √k`.
    pub fn block_direction(&self, j: usize) -> Array1<f64> {
        self.block_sum(j) / (self.k as f64).sqrt()
    }

    pub fn label_of_phi(&self, phi: ArrayView1<'_, f64>) -> f64 {
        let total: f64 = (0..self.r).map(|j| self.block(j).map(|l| phi[l]).product::<f64>()).sum();
        debug_assert!(total != 0.0, "odd r keeps the block sum nonzero");
        if total > 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    /// `x = Mφ` for each row of `phi`.
    pub fn embed(&self, phi: &Array2<f64>) -> Array2<f64> {
        match &self.matrix {
            None => phi.clone(),
            Some(m) => phi.dot(&m.t()),
        }
    }

    pub(crate) fn sample(&self, n: usize, rng: &mut Rng) -> Result<LabelledSample> {
        let rk = self.r * self.k;
        let p_u = 1.0 - 2.0 * self.r as f64 * self.p_a;
        let mut phi = Array2::zeros((n, self.d));
        let mut ys = Array1::zeros(n);
        for l in 0..n {
            let u: f64 = rng.random();
            if u < p_u {
                for c in 0..rk {
                    phi[[l, c]] = if rng.random::<bool>() { 1.0 } else { -1.0 };
                }
            } else {
                // Which of the 2r strong components, each with mass p_A.
                let idx = (((u - p_u) / self.p_a).floor() as usize).min(2 * self.r - 1);
                let (j, sign) = (idx / 2, if idx % 2 == 0 { 1.0 } else { -1.0 });
                for c in self.block(j) {
                    phi[[l, c]] = sign;
                }
            }
            for c in rk..self.d {
                let v: f64 = rng.random();
                phi[[l, c]] = if v < self.p_o {
                    1.0
                } else if v < 2.0 * self.p_o {
                    -1.0
                } else {
                    0.0
                };
            }
            ys[l] = self.label_of_phi(phi.row(l));
        }
        let xs = self.embed(&phi);
        Ok(LabelledSample { batch: Batch::new(xs, ys)?, latent: Latent::Phi(phi) })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUniform {
    d: usize,
    k: usize,
    #[serde(default)]
    support: Option<Vec<usize>>,
}

/// Sparse parity on the uniform cube: `x ~ Unif({±1}^d)`, `y = Π_{l∈A} x_l`
/// with `|A| = k` even.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawUniform")]
pub struct UniformParitySpec {
    d: usize,
    k: usize,
    support: Vec<usize>,
}

impl TryFrom<RawUniform> for UniformParitySpec {
    type Error = crate::error::Error;
    fn try_from(raw: RawUniform) -> Result<Self> {
        UniformParitySpec::new(raw.d, raw.k, raw.support)
    }
}

impl UniformParitySpec {
    /// `support` defaults to the first `k` coordinates.
    pub fn new(d: usize, k: usize, support: Option<Vec<usize>>) -> Result<Self> {
        check(k >= 2 && k % 2 == 0, || format!("k must be a positive even number, got {k}"))?;
        check(k <= d, || format!("k = {k} exceeds d = {d}"))?;
        let mut support = support.unwrap_or_else(|| (0..k).collect());
        check(support.len() == k, || format!("support has {} indices, expected {k}", support.len()))?;
        support.sort_unstable();
        check(support.windows(2).all(|w| w[0] < w[1]), || "support indices must be distinct".into())?;
        check(support.iter().all(|&i| i < d), || "support index out of range".into())?;
        Ok(Self { d, k, support })
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn label(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.support.iter().map(|&l| x[l]).product()
    }

    /// `Σ_{l∈A} e_l`.
    pub fn indicator(&self) -> Array1<f64> {
        let mut v = Array1::zeros(self.d);
        for &l in &self.support {
            v[l] = 1.0;
        }
        v
    }

    /// `D = Σ_{l∈A} e_l / √k`.
    pub fn direction(&self) -> Array1<f64> {
        let mut dir = Array1::zeros(self.d);
        for &l in &self.support {
            dir[l] = 1.0 / (self.k as f64).sqrt();
        }
        dir
    }

    pub(crate) fn sample(&self, n: usize, rng: &mut Rng) -> Result<LabelledSample> {
        let xs = Array2::from_shape_simple_fn((n, self.d), || if rng.random::<bool>() { 1.0 } else { -1.0 });
        let ys = Array1::from_iter(xs.rows().into_iter().map(|row| self.label(row)));
        Ok(LabelledSample { batch: Batch::new(xs, ys)?, latent: Latent::Cube })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invalid_parity_specs() {
        assert!(ParitySpec::new(10, 2, 3, 0.1, 0.5, Dictionary::Identity).is_err()); // even r
        assert!(ParitySpec::new(5, 1, 7, 0.1, 0.5, Dictionary::Identity).is_err()); // r k > d
        assert!(ParitySpec::new(20, 3, 3, 0.2, 0.5, Dictionary::Identity).is_err()); // 2 r p_A > 1
        assert!(ParitySpec::new(20, 1, 3, 0.2, 0.6, Dictionary::Identity).is_err()); // p_o > 1/2
        let bad = Dictionary::Explicit { columns: vec![vec![1.0, 0.0], vec![1.0, 1.0]] };
        assert!(ParitySpec::new(2, 1, 1, 0.1, 0.5, bad).is_err());
        assert!(ParitySpec::new(20, 1, 4, 0.25, 0.5, Dictionary::Identity).is_ok());
    }

    #[test]
    fn random_dictionary_is_orthonormal() {
        let s = ParitySpec::new(30, 3, 5, 0.1, 0.25, Dictionary::Random { seed: 3 }).unwrap();
        assert!(orthonormality_error(&s.matrix()) <= 1e-10);
        let d0 = s.block_direction(0);
        assert!((d0.dot(&d0) - 1.0).abs() < 1e-12);
        assert!(d0.dot(&s.block_direction(1)).abs() < 1e-12);
    }

    #[test]
    fn uniform_parity_validation() {
        assert!(UniformParitySpec::new(10, 3, None).is_err());
        assert!(UniformParitySpec::new(10, 4, Some(vec![1, 1, 2, 3])).is_err());
        assert!(UniformParitySpec::new(10, 4, Some(vec![1, 2, 3, 10])).is_err());
        let s = UniformParitySpec::new(10, 4, Some(vec![7, 1, 3, 5])).unwrap();
        assert_eq!(s.support(), &[1, 3, 5, 7]);
    }

    #[test]
    fn deserialization_validates() {
        let bad = r#"{"d": 10, "r": 2, "k": 3, "p_a": 0.1, "p_o": 0.5}"#;
        assert!(serde_json::from_str::<ParitySpec>(bad).is_err());
        let unknown = r#"{"d": 10, "r": 1, "k": 3, "p_a": 0.1, "p_o": 0.5, "extra": 1}"#;
        assert!(serde_json::from_str::<ParitySpec>(unknown).is_err());
    }
}
