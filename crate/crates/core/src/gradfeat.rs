//! Simplified gradient vectors `G(w, b) = E[y x 1[⟨w,x⟩ > b]]`, direction
//! cones, feature-probability estimation over the initialization law, and
//! the census of neurons whose first-step gradient is a good feature.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{DataSpec, WeightedSupport};
use crate::error::{Error, Result};
use crate::net::{Batch, NetworkParams};
use crate::rng;

/// Where the expectation in `G(w, b)` is taken.
#[derive(Clone, Copy, Debug)]
pub enum FeatureSource<'a> {
    /// Monte-Carlo mean over a sample.
    Batch(&'a Batch),
    /// Exact expectation over a finite support.
    Exact(&'a WeightedSupport),
}

impl FeatureSource<'_> {
    pub fn d(&self) -> usize {
        match self {
            FeatureSource::Batch(b) => b.d(),
            FeatureSource::Exact(s) => s.d(),
        }
    }

    fn parts(&self) -> (ArrayView2<'_, f64>, Array1<f64>) {
        // Per-row weight times label.
        match self {
            FeatureSource::Batch(b) => (b.xs(), b.ys().mapv(|y| y / b.n() as f64)),
            FeatureSource::Exact(s) => (s.xs.view(), &s.ys * &s.weights),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleCount {
    Samples(usize),
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureEstimate {
    pub g: Array1<f64>,
    pub norm: f64,
    pub n_used: SampleCount,
    /// Per-coordinate Monte-Carlo standard error; zero for exact sources.
    pub std_err: Array1<f64>,
}

pub fn simplified_gradient(w: ArrayView1<'_, f64>, b: f64, source: FeatureSource<'_>) -> Result<FeatureEstimate> {
    let d = source.d();
    if w.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: w.len() });
    }
    match source {
        FeatureSource::Exact(sup) => {
            if sup.is_empty() {
                return Err(Error::EmptyBatch);
            }
            let pre = sup.xs.dot(&w);
            let mut coef = &sup.ys * &sup.weights;
            coef.zip_mut_with(&pre, |c, &p| {
                if !(p > b) {
                    *c = 0.0;
                }
            });
            let g = sup.xs.t().dot(&coef);
            let norm = g.dot(&g).sqrt();
            Ok(FeatureEstimate { g, norm, n_used: SampleCount::Exact, std_err: Array1::zeros(d) })
        }
        FeatureSource::Batch(batch) => {
            let n = batch.n();
            let pre = batch.xs().dot(&w);
            let mut sum = Array1::<f64>::zeros(d);
            let mut sum_sq = Array1::<f64>::zeros(d);
            for ((x, &y), &p) in batch.xs().rows().into_iter().zip(batch.ys()).zip(&pre) {
                if p > b && y != 0.0 {
                    sum.scaled_add(y, &x);
                    sum_sq.zip_mut_with(&x, |acc, &xi| *acc += (y * xi) * (y * xi));
                }
            }
            let nf = n as f64;
            let g = &sum / nf;
            let std_err = if n > 1 {
                Array1::from_iter(
                    sum_sq.iter().zip(&g).map(|(&sq, &mean)| ((sq - nf * mean * mean).max(0.0) / (nf - 1.0) / nf).sqrt()),
                )
            } else {
                Array1::from_elem(d, f64::INFINITY)
            };
            let norm = g.dot(&g).sqrt();
            Ok(FeatureEstimate { g, norm, n_used: SampleCount::Samples(n), std_err })
        }
    }
}

/// `G(w_t, b_t)` for every column `w_t` of `ws`, as the columns of a `d × T`
/// matrix.
pub fn simplified_gradients(ws: ArrayView2<'_, f64>, bs: ArrayView1<'_, f64>, source: FeatureSource<'_>) -> Result<Array2<f64>> {
    let d = source.d();
    if ws.nrows() != d {
        return Err(Error::DimensionMismatch { expected: d, got: ws.nrows() });
    }
    if ws.ncols() != bs.len() {
        return Err(Error::DimensionMismatch { expected: ws.ncols(), got: bs.len() });
    }
    let (xs, coef) = source.parts();
    const CHUNK: usize = 128;
    let starts: Vec<usize> = (0..ws.ncols()).step_by(CHUNK).collect();
    let blocks: Vec<Array2<f64>> = starts
        .par_iter()
        .map(|&lo| {
            let hi = (lo + CHUNK).min(ws.ncols());
            let mut act = xs.dot(&ws.slice(s![.., lo..hi]));
            for (mut row, &c) in act.rows_mut().into_iter().zip(&coef) {
                row.zip_mut_with(&bs.slice(s![lo..hi]), |v, &b| *v = if *v > b { c } else { 0.0 });
            }
            xs.t().dot(&act)
        })
        .collect();
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    Ok(ndarray::concatenate(Axis(1), &views).expect("blocks share row count"))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    #[default]
    L2,
    Linf,
}

/// The direction neighbourhood `C_{D,γ}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeSpec {
    direction: Array1<f64>,
    gamma: f64,
    norm_kind: NormKind,
}

impl ConeSpec {
    pub fn new(direction: Array1<f64>, gamma: f64, norm_kind: NormKind) -> Result<Self> {
        let norm = direction.dot(&direction).sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::arg("direction", format!("must be a unit vector, norm is {norm}")));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::arg("gamma", format!("must lie in (0, 1), got {gamma}")));
        }
        Ok(Self { direction, gamma, norm_kind })
    }

    pub fn direction(&self) -> ArrayView1<'_, f64> {
        self.direction.view()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn contains(&self, v: ArrayView1<'_, f64>) -> bool {
        cone_contains(self.direction.view(), self.gamma, self.norm_kind, v)
    }
}

/// ℓ2: `|⟨v, D⟩| / ‖v‖ > 1 − γ`. ℓ∞: `‖v/‖v‖ − D‖_∞ < γ`. The zero vector
/// is in no cone.
pub fn cone_contains(direction: ArrayView1<'_, f64>, gamma: f64, kind: NormKind, v: ArrayView1<'_, f64>) -> bool {
    let norm = v.dot(&v).sqrt();
    if !(norm > 0.0) {
        return false;
    }
    match kind {
        NormKind::L2 => v.dot(&direction).abs() / norm > 1.0 - gamma,
        NormKind::Linf => v.iter().zip(direction).map(|(&vi, &di)| (vi / norm - di).abs()).fold(0.0, f64::max) < gamma,
    }
}

/// A candidate feature `(D, s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureDirection {
    pub id: String,
    pub direction: Array1<f64>,
    /// Required sign of the bias, `±1`.
    pub sign: i8,
}

impl FeatureDirection {
    pub fn new(id: impl Into<String>, direction: Array1<f64>, sign: i8) -> Self {
        Self { id: id.into(), direction, sign }
    }

    pub fn negated(&self) -> Self {
        Self { id: format!("-{}", self.id), direction: -&self.direction, sign: self.sign }
    }
}

/// The directions known to be gradient features for each distribution.
pub fn direction_catalog(spec: &DataSpec) -> Vec<FeatureDirection> {
    let pm = |name: &str, dir: Array1<f64>| {
        let mut out = Vec::new();
        for (dname, d) in [(format!("+{name}"), dir.clone()), (format!("-{name}"), -&dir)] {
            for s in [1i8, -1] {
                out.push(FeatureDirection::new(format!("{dname},s={}", if s > 0 { '+' } else { '-' }), d.clone(), s));
            }
        }
        out
    };
    match spec {
        DataSpec::Parity(p) => (0..p.r()).flat_map(|j| pm(&format!("D{}", j + 1), p.block_direction(j))).collect(),
        DataSpec::UniformParity(p) => pm("D", p.direction()),
        DataSpec::Mixture(m) => mixture_catalog(m.components()),
        DataSpec::XorGmm(x) => mixture_catalog(x.to_mixture().components()),
        DataSpec::Linear(l) => vec![
            FeatureDirection::new("+w*,s=-", l.w_star(), -1),
            FeatureDirection::new("-w*,s=-", -l.w_star(), -1),
        ],
    }
}

fn mixture_catalog(components: &[crate::distributions::MixtureComponent]) -> Vec<FeatureDirection> {
    components
        .iter()
        .enumerate()
        .filter(|(_, c)| c.mean_norm() > 0.0)
        .map(|(j, c)| FeatureDirection::new(format!("D{},s=+", j + 1), c.direction(), 1))
        .collect()
}

/// Law of a first-quadrant neuron `(w, b)` at initialization; `b = ±b̃` with
/// probability 1/2 each.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitLaw {
    /// `w ~ N(0, σ_w² I)`.
    Gaussian { sigma_w: f64, b_tilde: f64 },
    /// `w` uniform on `{±1}^d`.
    Cube { b_tilde: f64 },
}

impl InitLaw {
    fn b_tilde(&self) -> f64 {
        match *self {
            InitLaw::Gaussian { b_tilde, .. } | InitLaw::Cube { b_tilde } => b_tilde,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSetQuery {
    pub directions: Vec<FeatureDirection>,
    pub gamma: f64,
    #[serde(default)]
    pub norm_kind: NormKind,
    pub b_g: f64,
    #[serde(default)]
    pub b_g1: Option<f64>,
    pub trials: usize,
}

pub const MIN_TRIALS: usize = 100;

impl FeatureSetQuery {
    pub fn validate(&self) -> Result<()> {
        if !(self.b_g > 0.0) {
            return Err(Error::arg("b_g", format!("must be positive, got {}", self.b_g)));
        }
        if let Some(b1) = self.b_g1 {
            if !(b1 >= self.b_g) {
                return Err(Error::arg("b_g1", format!("must be at least b_g = {}, got {b1}", self.b_g)));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::arg("gamma", format!("must lie in (0, 1), got {}", self.gamma)));
        }
        if self.trials < MIN_TRIALS {
            return Err(Error::arg("trials", format!("need at least {MIN_TRIALS}, got {}", self.trials)));
        }
        Ok(())
    }

    /// Whether `(g, b)` realizes the event for direction `dir`.
    pub fn event(&self, dir: &FeatureDirection, g: ArrayView1<'_, f64>, b: f64) -> bool {
        let norm = g.dot(&g).sqrt();
        bias_sign(b) == Some(dir.sign)
            && norm >= self.b_g
            && self.b_g1.is_none_or(|b1| norm <= b1)
            && cone_contains(dir.direction.view(), self.gamma, self.norm_kind, g)
    }
}

fn bias_sign(b: f64) -> Option<i8> {
    if b > 0.0 {
        Some(1)
    } else if b < 0.0 {
        Some(-1)
    } else {
        None
    }
}

/// Draws of `(w, b)` from the initialization law with their simplified
/// gradients.
#[derive(Clone, Debug)]
pub struct FeatureDraws {
    pub ws: Array2<f64>,
    pub bs: Array1<f64>,
    pub gs: Array2<f64>,
}

pub fn draw_feature_samples(init: InitLaw, trials: usize, source: FeatureSource<'_>, seed: u64) -> Result<FeatureDraws> {
    let d = source.d();
    let mut rng = rng::stream(seed, "feature-draws", 0);
    let mut ws = Array2::zeros((d, trials));
    let mut bs = Array1::zeros(trials);
    let b_tilde = init.b_tilde();
    if !(b_tilde != 0.0 && b_tilde.is_finite()) {
        return Err(Error::arg("b_tilde", "must be finite and nonzero"));
    }
    match init {
        InitLaw::Gaussian { sigma_w, .. } => {
            let normal = Normal::new(0.0, sigma_w).map_err(|e| Error::arg("sigma_w", e.to_string()))?;
            for t in 0..trials {
                bs[t] = if rng.random::<bool>() { b_tilde } else { -b_tilde };
                for r in 0..d {
                    ws[[r, t]] = normal.sample(&mut rng);
                }
            }
        }
        InitLaw::Cube { .. } => {
            for t in 0..trials {
                bs[t] = if rng.random::<bool>() { b_tilde } else { -b_tilde };
                for r in 0..d {
                    ws[[r, t]] = if rng.random::<bool>() { 1.0 } else { -1.0 };
                }
            }
        }
    }
    let gs = simplified_gradients(ws.view(), bs.view(), source)?;
    Ok(FeatureDraws { ws, bs, gs })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureProbability {
    pub id: String,
    pub hits: usize,
    pub trials: usize,
    pub p_hat: f64,
    /// 95% Wilson score interval.
    pub ci: (f64, f64),
    /// Median `‖G‖` over the draws that satisfied the event (0 if none).
    pub median_norm: f64,
}

/// Wilson score interval for `hits` successes out of `trials` at normal
/// quantile `z`.
pub fn wilson_interval(hits: usize, trials: usize, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let center = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((center - half).max(0.0), (center + half).min(1.0))
}

pub fn feature_prob_from_draws(query: &FeatureSetQuery, draws: &FeatureDraws) -> Result<Vec<FeatureProbability>> {
    query.validate()?;
    let trials = draws.bs.len();
    Ok(query
        .directions
        .iter()
        .map(|dir| {
            let mut norms: Vec<f64> = (0..trials)
                .filter(|&t| query.event(dir, draws.gs.column(t), draws.bs[t]))
                .map(|t| draws.gs.column(t).dot(&draws.gs.column(t)).sqrt())
                .collect();
            norms.sort_by(f64::total_cmp);
            let hits = norms.len();
            FeatureProbability {
                id: dir.id.clone(),
                hits,
                trials,
                p_hat: hits as f64 / trials as f64,
                ci: wilson_interval(hits, trials, 1.959_963_984_540_054),
                median_norm: if hits == 0 { 0.0 } else { norms[hits / 2] },
            }
        })
        .collect())
}

pub fn estimate_feature_prob(
    query: &FeatureSetQuery,
    init: InitLaw,
    source: FeatureSource<'_>,
    seed: u64,
) -> Result<Vec<FeatureProbability>> {
    query.validate()?;
    for dir in &query.directions {
        if dir.direction.len() != source.d() {
            return Err(Error::DimensionMismatch { expected: source.d(), got: dir.direction.len() });
        }
    }
    let draws = draw_feature_samples(init, query.trials, source, seed)?;
    feature_prob_from_draws(query, &draws)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NiceSetEntry {
    pub id: String,
    pub sign: i8,
    pub count: usize,
    pub indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NiceSetReport {
    pub entries: Vec<NiceSetEntry>,
    pub gamma: f64,
    pub b_g: f64,
    pub b_g1: Option<f64>,
    pub norm_kind: NormKind,
    /// Neurons examined: the first `2m`.
    pub scanned: usize,
}

impl NiceSetReport {
    pub fn count(&self, id: &str) -> Option<usize> {
        self.entries.iter().find(|e| e.id == id).map(|e| e.count)
    }
}

/// Neurons `i < 2m` whose first-step gradient `∇_i` (column `i` of
/// `grad_w`) approximates feature `(D, s)`: `sign(b_i) = s`,
/// `⟨∇_i, D⟩ > (1 − γ)‖∇_i‖` and `‖∇_i‖ ≥ |a_i⁽⁰⁾| B_G`. The ℓ∞ variant
/// replaces the alignment test by `‖∇_i/‖∇_i‖ − D‖_∞ < γ` and also applies
/// `‖∇_i‖ ≤ |a_i⁽⁰⁾| B_G1` when given.
pub fn nice_set_census(
    params0: &NetworkParams,
    grad_w: ArrayView2<'_, f64>,
    directions: &[FeatureDirection],
    gamma: f64,
    b_g: f64,
    b_g1: Option<f64>,
    norm_kind: NormKind,
) -> Result<NiceSetReport> {
    if grad_w.dim() != params0.w().dim() {
        return Err(Error::DimensionMismatch { expected: params0.width(), got: grad_w.ncols() });
    }
    let scanned = 2 * params0.m();
    let norms = crate::net::column_norms(grad_w);
    let entries = directions
        .iter()
        .map(|dir| {
            let indices: Vec<usize> = (0..scanned)
                .filter(|&i| {
                    let g = grad_w.column(i);
                    let a0 = params0.a()[i].abs();
                    let aligned = match norm_kind {
                        NormKind::L2 => norms[i] > 0.0 && g.dot(&dir.direction) > (1.0 - gamma) * norms[i],
                        NormKind::Linf => cone_contains(dir.direction.view(), gamma, NormKind::Linf, g),
                    };
                    bias_sign(params0.b()[i]) == Some(dir.sign)
                        && aligned
                        && norms[i] >= a0 * b_g
                        && b_g1.is_none_or(|b1| norms[i] <= a0 * b1)
                })
                .collect();
            NiceSetEntry { id: dir.id.clone(), sign: dir.sign, count: indices.len(), indices }
        })
        .collect();
    Ok(NiceSetReport { entries, gamma, b_g, b_g1, norm_kind, scanned })
}

fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Fourier coefficient of `Maj_n` on any set of odd size `k` (zero for even
/// `k`); `n` must be odd.
pub fn majority_coefficient(n: u64, k: u64) -> f64 {
    assert!(n % 2 == 1, "majority needs an odd number of inputs");
    if k % 2 == 0 || k > n {
        return 0.0;
    }
    let half = (n - 1) / 2;
    let j = (k - 1) / 2;
    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
    sign * binomial(half, j) / binomial(n - 1, k - 1) * binomial(n - 1, half) / 2f64.powi((n - 1) as i32)
}

/// Closed form of `G(w, b)` for sparse parity on the uniform cube when
/// `w ∈ {±1}^d` and `b ∈ (−1, 1)`:
/// `G_j = ½ ξ_{|A Δ {j}|} Π_{l ∈ A Δ {j}} w_l`, with `ξ` the majority
/// coefficients on `d` inputs (`d + 1` when `d` is even).
pub fn uniform_parity_gradient_formula(support: &[usize], w: ArrayView1<'_, f64>) -> Array1<f64> {
    let d = w.len();
    let n = if d % 2 == 1 { d } else { d + 1 } as u64;
    let k = support.len() as u64;
    let prod_a: f64 = support.iter().map(|&l| w[l]).product();
    Array1::from_shape_fn(d, |j| {
        if support.contains(&j) {
            0.5 * majority_coefficient(n, k - 1) * prod_a * w[j]
        } else {
            0.5 * majority_coefficient(n, k + 1) * prod_a * w[j]
        }
    })
}
