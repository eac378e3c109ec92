//! Ground-truth networks `g*` built from the existence lemmas, OPT
//! estimation, the random-feature baseline and lottery-ticket supports.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::distributions::{DataSpec, LinearSpec, MoGSpec, ParitySpec, UniformParitySpec, XorGmmSpec};
use crate::error::{Error, Result};
use crate::gradfeat::{nice_set_census, FeatureDirection, NormKind};
use crate::net::{relu_net_forward_batch, Batch, LossKind, NetworkParams};
use crate::trainer::{self, DataSource, FirstStep, HyperSchedule, TrainOptions, TrainOutcome, TrainTrace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ParityBump,
    UniformParityBump,
    MogThreshold,
    XorGmmThreshold,
    LinearPair,
}

/// Weight and input-moment bounds `(B_a1, B_a2, B_b)` and
/// `(B_x1, B_x2, B_x)`. `b_x` is absent for unbounded inputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundProfile {
    pub b_a1: f64,
    pub b_a2: f64,
    pub b_b: f64,
    pub b_x1: f64,
    pub b_x2: f64,
    pub b_x: Option<f64>,
}

impl BoundProfile {
    /// `B_a1 ≤ B_a2` and `B_x1² ≤ B_x2 ≤ B_x²`, up to rounding.
    pub fn is_ordered(&self) -> bool {
        let tol = 1e-9;
        self.b_a1 <= self.b_a2 * (1.0 + tol)
            && self.b_x1 * self.b_x1 <= self.b_x2 * (1.0 + tol)
            && self.b_x.is_none_or(|bx| self.b_x2 <= bx * bx * (1.0 + tol))
    }
}

/// A two-layer ReLU network of arbitrary width `r′`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleNet {
    pub a: Array1<f64>,
    /// `d × r′`, one column per neuron.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub provenance: Provenance,
    /// Bounds claimed by the construction.
    pub bounds: BoundProfile,
    /// Assumptions of the construction that the spec does not meet.
    pub warnings: Vec<String>,
}

impl OracleNet {
    pub fn width(&self) -> usize {
        self.a.len()
    }

    pub fn d(&self) -> usize {
        self.w.nrows()
    }

    pub fn forward_batch(&self, xs: ndarray::ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if xs.ncols() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), got: xs.ncols() });
        }
        Ok(relu_net_forward_batch(self.a.view(), self.w.view(), self.b.view(), xs))
    }

    /// `max |a_i|`, `‖a‖₂` and `max |b_i|` after rescaling every neuron to
    /// a unit weight vector, `(a_i‖w_i‖, w_i/‖w_i‖, b_i/‖w_i‖)`.
    pub fn weight_bounds(&self) -> (f64, f64, f64) {
        let norms = crate::net::column_norms(self.w.view());
        let (mut a1, mut a2, mut bb) = (0.0f64, 0.0f64, 0.0f64);
        for ((&a, &b), &n) in self.a.iter().zip(&self.b).zip(&norms) {
            if n == 0.0 {
                continue;
            }
            a1 = a1.max((a * n).abs());
            a2 += (a * n).powi(2);
            bb = bb.max((b / n).abs());
        }
        (a1, a2.sqrt(), bb)
    }

    /// Whether the weights respect the claimed bounds.
    pub fn conforms(&self) -> bool {
        let (a1, a2, bb) = self.weight_bounds();
        let tol = 1e-12;
        a1 <= self.bounds.b_a1 * (1.0 + tol) && a2 <= self.bounds.b_a2 * (1.0 + tol) && bb <= self.bounds.b_b * (1.0 + tol) && self.bounds.is_ordered()
    }
}

struct Neurons {
    a: Vec<f64>,
    w: Vec<Array1<f64>>,
    b: Vec<f64>,
}

impl Neurons {
    fn new() -> Self {
        Self { a: Vec::new(), w: Vec::new(), b: Vec::new() }
    }

    fn push(&mut self, a: f64, w: &Array1<f64>, b: f64) {
        self.a.push(a);
        self.w.push(w.clone());
        self.b.push(b);
    }

    /// Bumps of height one at `⟨D, x⟩ = (2i − k)/√k` with sign `(−1)^{k−i}`,
    /// where `sum = √k·D`. Each neuron is stored as `(a/√k, √k·w, √k·b)`, the
    /// same function as the unit-direction form but exact in floating point
    /// when `sum` and the inputs are integral.
    fn push_bumps(&mut self, sum: &Array1<f64>, k: usize) {
        for i in 0..=k {
            let s = if (k - i) % 2 == 0 { 1.0 } else { -1.0 };
            let c = (2 * i) as f64 - k as f64;
            self.push(s, sum, c - 1.0);
            self.push(-2.0 * s, sum, c);
            self.push(s, sum, c + 1.0);
        }
    }

    fn finish(self, d: usize, provenance: Provenance, bounds: BoundProfile, warnings: Vec<String>) -> OracleNet {
        let mut w = Array2::zeros((d, self.w.len()));
        for (i, col) in self.w.iter().enumerate() {
            w.column_mut(i).assign(col);
        }
        OracleNet { a: Array1::from(self.a), w, b: Array1::from(self.b), provenance, bounds, warnings }
    }
}

/// `r` blocks of `k + 1` bumps over `D_j = Σ_{l∈A_j} M_l/√k`; `3r(k+1)`
/// neurons. The second-layer norm of this construction is `√(6rk(k+1))`.
pub fn build_parity_gstar(spec: &ParitySpec) -> OracleNet {
    let (r, k, d) = (spec.r(), spec.k(), spec.d());
    let mut n = Neurons::new();
    for j in 0..r {
        n.push_bumps(&spec.block_sum(j), k);
    }
    let (kf, rf) = (k as f64, r as f64);
    let bounds = BoundProfile {
        b_a1: 2.0 * kf.sqrt(),
        b_a2: (6.0 * rf * kf * (kf + 1.0)).sqrt(),
        b_b: (kf + 1.0) / kf.sqrt(),
        b_x1: (d as f64).sqrt(),
        b_x2: d as f64,
        b_x: Some((d as f64).sqrt()),
    };
    let mut warnings = Vec::new();
    if k % 2 == 0 && r > 1 {
        warnings.push(format!("even k = {k} with r = {r}: idle blocks sit on a bump, so y·g*(x) ≥ 1 can fail"));
    }
    n.finish(d, Provenance::ParityBump, bounds, warnings)
}

/// The `k + 1`-bump network over `D = Σ_{l∈A} e_l/√k` computing the parity
/// of `x_A` on the cube.
pub fn build_uniform_parity_gstar(spec: &UniformParitySpec) -> OracleNet {
    let (k, d) = (spec.k(), spec.d());
    let mut n = Neurons::new();
    n.push_bumps(&spec.indicator(), k);
    let kf = k as f64;
    let bounds = BoundProfile {
        b_a1: 2.0 * kf.sqrt(),
        b_a2: (6.0 * kf * (kf + 1.0)).sqrt(),
        b_b: (kf + 1.0) / kf.sqrt(),
        b_x1: (d as f64).sqrt(),
        b_x2: d as f64,
        b_x: Some((d as f64).sqrt()),
    };
    n.finish(d, Provenance::UniformParityBump, bounds, Vec::new())
}

/// One threshold neuron per cluster:
/// `g*(x) = Σ_j y_j/(√(ζ ln d)·σ̃) · σ(⟨D_j, x⟩ − 2√(ζ ln d)·σ̃)` with
/// `σ̃ = max(σ_B, max_j ‖μ_j‖/√d)`. `zeta` defaults to 8.
pub fn build_mog_gstar(spec: &MoGSpec, zeta: Option<f64>) -> Result<OracleNet> {
    let zeta = zeta.unwrap_or(8.0);
    check_zeta(zeta)?;
    let d = spec.d();
    let df = d as f64;
    let b_mu2 = spec.components().iter().map(|c| c.mean_norm()).fold(0.0, f64::max) / df.sqrt();
    let sigma = spec.sigma_max().max(b_mu2);
    let scale = (zeta * df.ln()).sqrt() * sigma;
    let mut n = Neurons::new();
    let mut warnings = Vec::new();
    let comps = spec.components();
    for (j, c) in comps.iter().enumerate() {
        if c.mean_norm() == 0.0 {
            warnings.push(format!("component {j} has zero mean and no direction; skipped"));
            continue;
        }
        n.push(c.label() / scale, &c.direction(), 2.0 * scale);
    }
    let r = n.a.len();
    let overlap_limit = (1.0 / (2.0 * comps.len() as f64)).min(sigma / b_mu2 * (zeta * df.ln() / df).sqrt());
    for i in 0..comps.len() {
        for j in i + 1..comps.len() {
            if comps[i].mean_norm() == 0.0 || comps[j].mean_norm() == 0.0 {
                continue;
            }
            let cos = comps[i].direction().dot(&comps[j].direction());
            if cos > overlap_limit {
                warnings.push(format!("clusters {i} and {j} overlap: cos = {cos:.3} > {overlap_limit:.3}"));
            }
        }
    }
    let b_mu1 = comps.iter().map(|c| c.mean_norm()).fold(f64::INFINITY, f64::min) / df.sqrt();
    if b_mu1 * df.sqrt() < 3.0 * scale {
        warnings.push(format!(
            "smallest cluster mean {:.3} is below three thresholds' worth ({:.3}); g* may not fire",
            b_mu1 * df.sqrt(),
            3.0 * scale
        ));
    }
    let bounds = BoundProfile {
        b_a1: 1.0 / scale,
        b_a2: (r as f64).sqrt() / scale,
        b_b: 2.0 * scale,
        b_x1: (b_mu2 + sigma) * df.sqrt(),
        b_x2: (b_mu2 + sigma).powi(2) * df,
        b_x: None,
    };
    Ok(n.finish(d, Provenance::MogThreshold, bounds, warnings))
}

/// XOR threshold network with `σ_B` in place of `σ̃`. `zeta` defaults to
/// `d / (25 σ_B² ln d)`, which puts each threshold at `2√d/5`.
pub fn build_xor_gstar(spec: &XorGmmSpec, zeta: Option<f64>) -> Result<OracleNet> {
    let d = spec.d();
    let df = d as f64;
    let sigma = spec.sigma_b();
    let zeta = zeta.unwrap_or(df / (25.0 * sigma * sigma * df.ln()));
    check_zeta(zeta)?;
    let scale = (zeta * df.ln()).sqrt() * sigma;
    let mix = spec.to_mixture();
    let mut n = Neurons::new();
    for c in mix.components() {
        n.push(c.label() / scale, &c.direction(), 2.0 * scale);
    }
    let mut warnings = Vec::new();
    if spec.scale() < 3.0 * scale {
        warnings.push(format!("cluster distance {:.3} is below 3 thresholds' worth ({:.3})", spec.scale(), 3.0 * scale));
    }
    let unit = spec.scale() / df.sqrt();
    let bounds = BoundProfile {
        b_a1: 1.0 / scale,
        b_a2: 2.0 / scale,
        b_b: 2.0 * scale,
        b_x1: (unit + sigma) * df.sqrt(),
        b_x2: (unit + sigma).powi(2) * df,
        b_x: None,
    };
    Ok(n.finish(d, Provenance::XorGmmThreshold, bounds, warnings))
}

fn check_zeta(zeta: f64) -> Result<()> {
    if zeta > 0.0 && zeta.is_finite() {
        Ok(())
    } else {
        Err(Error::arg("zeta", format!("must be positive, got {zeta}")))
    }
}

/// `g*(x) = (1/β)σ(⟨w*, x⟩) − (1/β)σ(⟨−w*, x⟩) = ⟨w*, x⟩/β`.
pub fn build_linear_gstar(spec: &LinearSpec) -> OracleNet {
    let beta = spec.beta();
    let w = spec.w_star();
    let mut n = Neurons::new();
    n.push(1.0 / beta, &w, 0.0);
    n.push(-1.0 / beta, &(-&w), 0.0);
    let d = spec.d() as f64;
    // E‖x‖² = E c² + (d − 1) with c ~ U[β, 3β].
    let b_x2 = 13.0 * beta * beta / 3.0 + d - 1.0;
    let bounds = BoundProfile {
        b_a1: 1.0 / beta,
        b_a2: 2f64.sqrt() / beta,
        b_b: 1.0 / b_x2,
        b_x1: b_x2.sqrt(),
        b_x2,
        b_x: None,
    };
    n.finish(spec.d(), Provenance::LinearPair, bounds, Vec::new())
}

/// `g*` for any distribution family.
pub fn build_gstar(spec: &DataSpec, zeta: Option<f64>) -> Result<OracleNet> {
    match spec {
        DataSpec::Parity(s) => Ok(build_parity_gstar(s)),
        DataSpec::UniformParity(s) => Ok(build_uniform_parity_gstar(s)),
        DataSpec::Mixture(s) => build_mog_gstar(s, zeta),
        DataSpec::XorGmm(s) => build_xor_gstar(s, zeta),
        DataSpec::Linear(s) => Ok(build_linear_gstar(s)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptEstimate {
    /// Mean loss of `g*` on fresh samples: an upper bound on OPT.
    pub loss: f64,
    pub std_err: f64,
    pub error: f64,
    pub n: usize,
}

pub const MIN_OPT_SAMPLES: usize = 10_000;

pub fn estimate_opt(net: &OracleNet, spec: &DataSpec, kind: LossKind, n: usize, seed: u64) -> Result<OptEstimate> {
    if n < MIN_OPT_SAMPLES {
        return Err(Error::arg("n", format!("need at least {MIN_OPT_SAMPLES} samples, got {n}")));
    }
    let batch = spec.sample(n, seed)?;
    opt_on_batch(net, &batch, kind)
}

pub fn opt_on_batch(net: &OracleNet, batch: &Batch, kind: LossKind) -> Result<OptEstimate> {
    let f = net.forward_batch(batch.xs())?;
    let losses: Vec<f64> = f.iter().zip(batch.ys()).map(|(&fx, &y)| kind.value(y * fx)).collect();
    let n = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / n;
    let var = if losses.len() > 1 { losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let wrong = f.iter().zip(batch.ys()).filter(|(&fx, &y)| (if fx >= 0.0 { 1.0 } else { -1.0 }) != y).count();
    Ok(OptEstimate { loss: mean, std_err: (var / n).sqrt(), error: wrong as f64 / n, n: losses.len() })
}

/// Trains only the second layer on top of the frozen initial features, with
/// the same schedule (first step included). With `steps = 0` the initial
/// network is evaluated as is.
pub fn random_feature_baseline(
    params0: &NetworkParams,
    data: DataSource<'_>,
    sched: &HyperSchedule,
    kind: LossKind,
    eval_set: &Batch,
) -> Result<TrainOutcome> {
    if sched.steps == 0 {
        let error = trainer::eval_error(params0, eval_set)?;
        let record = trainer::StepRecord {
            t: 0,
            loss: crate::net::empirical_loss(params0, eval_set, kind)?,
            error,
            a_norm: params0.a().dot(&params0.a()).sqrt(),
            w_drift: 0.0,
        };
        let trace = TrainTrace { records: vec![record], best: Some(trainer::BestIterate { t: 0, error }) };
        return Ok(TrainOutcome { best: params0.clone(), last: params0.clone(), trace });
    }
    let opts = TrainOptions { freeze_first_layer: true, ..TrainOptions::default() };
    Ok(trainer::train(params0, data, sched, kind, eval_set, &opts)?.outcome)
}

/// Lottery-ticket support: for each direction, its nice neurons ranked by
/// `‖∇_i‖/|a_i⁽⁰⁾|`, at most `⌈budget/r′⌉` each, interleaved across
/// directions until `budget` neurons are chosen.
pub fn extract_lottery_support(
    first: &FirstStep,
    directions: &[FeatureDirection],
    gamma: f64,
    b_g: f64,
    budget: usize,
) -> Result<Vec<usize>> {
    if directions.is_empty() || budget < directions.len() {
        return Err(Error::arg("budget", format!("{budget} is less than the {} directions", directions.len())));
    }
    let census = nice_set_census(&first.params0, first.grads.w.view(), directions, gamma, b_g, None, NormKind::L2)?;
    let norms = crate::net::column_norms(first.grads.w.view());
    let per = budget.div_ceil(directions.len());
    let mut ranked = Vec::with_capacity(directions.len());
    for entry in &census.entries {
        if entry.indices.is_empty() {
            return Err(Error::EmptyNiceSet(entry.id.clone()));
        }
        let mut idx = entry.indices.clone();
        let score = |i: usize| norms[i] / first.params0.a()[i].abs();
        idx.sort_by(|&x, &y| score(y).total_cmp(&score(x)).then(x.cmp(&y)));
        idx.truncate(per);
        ranked.push(idx);
    }
    let mut chosen = std::collections::BTreeSet::new();
    let longest = ranked.iter().map(Vec::len).max().unwrap_or(0);
    'outer: for rank in 0..longest {
        for list in &ranked {
            if chosen.len() == budget {
                break 'outer;
            }
            if let Some(&i) = list.get(rank) {
                chosen.insert(i);
            }
        }
    }
    Ok(chosen.into_iter().collect())
}

/// Retrains from the post-step-1 network restricted to `support`. Only the
/// supported neurons are materialized during training; the returned
/// parameters are full width with `a_i = 0` and `w_i = w_i⁽¹⁾` outside the
/// support.
pub fn train_subnetwork(
    first: &FirstStep,
    support: &[usize],
    data: DataSource<'_>,
    sched: &HyperSchedule,
    kind: LossKind,
    eval_set: &Batch,
) -> Result<TrainOutcome> {
    let full = &first.params1;
    let width = full.width();
    if support.is_empty() {
        return Err(Error::arg("support", "is empty"));
    }
    if let Some(&i) = support.iter().find(|&&i| i >= width) {
        return Err(Error::arg("support", format!("neuron {i} out of range")));
    }
    // Pad to a multiple of four with masked copies of a supported neuron.
    let padded = support.len().div_ceil(4) * 4;
    let cols: Vec<usize> = (0..padded).map(|j| support[j.min(support.len() - 1)]).collect();
    let a = Array1::from_shape_fn(padded, |j| if j < support.len() { full.a()[cols[j]] } else { 0.0 });
    let w = full.w().select(ndarray::Axis(1), &cols);
    let b = full.b().select(ndarray::Axis(0), &cols);
    let compact = NetworkParams::from_parts(a, w, b)?;
    let mask = (0..padded).map(|j| j < support.len()).collect();
    let opts = TrainOptions { mask: Some(mask), ..TrainOptions::default() };
    let out = trainer::continue_training(&compact, data, sched, kind, eval_set, &opts)?;
    let expand = |p: &NetworkParams| -> Result<NetworkParams> {
        let mut a = Array1::zeros(width);
        let mut w = full.w().to_owned();
        for (j, &i) in support.iter().enumerate() {
            a[i] = p.a()[j];
            w.column_mut(i).assign(&p.w().column(j));
        }
        NetworkParams::from_parts(a, w, full.b().to_owned())
    };
    Ok(TrainOutcome { best: expand(&out.best)?, last: expand(&out.last)?, trace: out.trace })
}
