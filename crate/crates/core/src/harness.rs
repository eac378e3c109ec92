//! Named experiments. Each one runs a configuration over its seeds, records
//! per-seed metrics and declares the checks a seed must satisfy; the verdict
//! is always recomputed from the stored metrics.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{self, Config};
use crate::distributions::{enumerate, DataSpec};
use crate::error::{Error, Result};
use crate::gradfeat::{self, FeatureSource, FeatureSetQuery, InitLaw};
use crate::net::{self, Batch, LossKind, NetworkParams};
use crate::oracle;
use crate::rng::{derive_seed, stream};
use crate::trainer::{self, DataSource, TrainOptions};

pub const SCHEMA_VERSION: u32 = 1;

/// JSON schema every serialized [`ExperimentReport`] validates against.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    InitZero,
    GradCheck,
    ForgetStep1,
    ExactParityGradient,
    GstarMargin,
    FeatureEmergence,
    XorGmmSeparation,
    ParitySeparation,
    LthSubnet,
    LinearFeatureDirection,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 10] = [
        ExperimentId::InitZero,
        ExperimentId::GradCheck,
        ExperimentId::ForgetStep1,
        ExperimentId::ExactParityGradient,
        ExperimentId::GstarMargin,
        ExperimentId::FeatureEmergence,
        ExperimentId::XorGmmSeparation,
        ExperimentId::ParitySeparation,
        ExperimentId::LthSubnet,
        ExperimentId::LinearFeatureDirection,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::InitZero => "init_zero",
            ExperimentId::GradCheck => "grad_check",
            ExperimentId::ForgetStep1 => "forget_step1",
            ExperimentId::ExactParityGradient => "exact_parity_gradient",
            ExperimentId::GstarMargin => "gstar_margin",
            ExperimentId::FeatureEmergence => "feature_emergence",
            ExperimentId::XorGmmSeparation => "xor_gmm_separation",
            ExperimentId::ParitySeparation => "parity_separation",
            ExperimentId::LthSubnet => "lth_subnet",
            ExperimentId::LinearFeatureDirection => "linear_feature_direction",
        }
    }

    /// Preset used when no configuration is given.
    pub fn default_preset(self) -> &'static str {
        match self {
            ExperimentId::InitZero | ExperimentId::ForgetStep1 | ExperimentId::XorGmmSeparation => "xor_gmm",
            ExperimentId::GradCheck | ExperimentId::LinearFeatureDirection => "linear",
            ExperimentId::ExactParityGradient => "uniform_parity",
            ExperimentId::GstarMargin => "parity_small",
            ExperimentId::FeatureEmergence => "parity_features",
            ExperimentId::ParitySeparation | ExperimentId::LthSubnet => "parity",
        }
    }

    pub fn default_config(self) -> Result<Config> {
        config::preset(self.default_preset())
    }
}

impl std::fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|id| id.name() == s).ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    /// Operation that produced the value.
    pub producer: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub metrics: BTreeMap<String, Metric>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl SeedResult {
    fn new(seed: u64) -> Self {
        Self { seed, metrics: BTreeMap::new(), notes: Vec::new() }
    }

    fn put(&mut self, name: impl Into<String>, value: f64, producer: &str) {
        self.metrics.insert(name.into(), Metric { value, producer: producer.to_string() });
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).map(|m| m.value)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cmp {
    Le,
    Ge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bound {
    Const { value: f64 },
    /// `scale · metric + offset`, read from the same seed.
    Metric { name: String, scale: f64, offset: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub metric: String,
    pub cmp: Cmp,
    pub bound: Bound,
}

impl Check {
    fn le(metric: impl Into<String>, value: f64) -> Self {
        Self { metric: metric.into(), cmp: Cmp::Le, bound: Bound::Const { value } }
    }

    fn ge(metric: impl Into<String>, value: f64) -> Self {
        Self { metric: metric.into(), cmp: Cmp::Ge, bound: Bound::Const { value } }
    }

    /// Missing or non-finite values fail.
    pub fn holds(&self, seed: &SeedResult) -> bool {
        let Some(v) = seed.get(&self.metric) else { return false };
        let bound = match &self.bound {
            Bound::Const { value } => *value,
            Bound::Metric { name, scale, offset } => match seed.get(name) {
                Some(m) => scale * m + offset,
                None => return false,
            },
        };
        if !v.is_finite() || !bound.is_finite() {
            return false;
        }
        match self.cmp {
            Cmp::Le => v <= bound,
            Cmp::Ge => v >= bound,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub description: String,
    /// A seed passes when every check holds.
    pub checks: Vec<Check>,
    pub min_passing_seeds: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub passing_seeds: usize,
    pub required: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: ExperimentId,
    pub config: Config,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SeedResult>,
    pub aggregate: BTreeMap<String, Aggregate>,
    pub criterion: Criterion,
    pub wall_clock_s: f64,
    pub warnings: Vec<String>,
}

impl ExperimentReport {
    pub fn seed_passes(&self, seed: &SeedResult) -> bool {
        self.criterion.checks.iter().all(|c| c.holds(seed))
    }

    pub fn verdict(&self) -> Verdict {
        let passing_seeds = self.per_seed.iter().filter(|s| self.seed_passes(s)).count();
        let required = self.criterion.min_passing_seeds;
        Verdict { passing_seeds, required, passed: passing_seeds >= required }
    }

    pub fn passed(&self) -> bool {
        self.verdict().passed
    }

    /// Pretty JSON with a `verdict` field derived at write time.
    pub fn to_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        value["verdict"] = serde_json::to_value(self.verdict())?;
        Ok(serde_json::to_string_pretty(&value)?)
    }

    /// Parses a report; a stored `verdict` is ignored.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: serde_json::Value = serde_json::from_str(text)?;
        if let Some(obj) = value.as_object_mut() {
            obj.remove("verdict");
        }
        Ok(serde_json::from_value(value)?)
    }

    /// One line: name, pass/fail, passing seeds and headline aggregates.
    pub fn summary_line(&self) -> String {
        let v = self.verdict();
        let heads: Vec<String> = self
            .criterion
            .checks
            .iter()
            .map(|c| c.metric.as_str())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .take(4)
            .filter_map(|m| self.aggregate.get(m).map(|a| format!("{m}={:.4e}", a.mean)))
            .collect();
        format!(
            "{} {} ({}/{} seeds, need {}) {}",
            self.experiment,
            if v.passed { "PASS" } else { "FAIL" },
            v.passing_seeds,
            self.per_seed.len(),
            v.required,
            heads.join(" ")
        )
    }
}

/// Fraction of seeds that must pass, rounded up.
fn required(fraction: f64, seeds: usize) -> usize {
    ((fraction * seeds as f64) - 1e-9).ceil().max(0.0) as usize
}

fn mixture_zeta(config: &Config) -> Option<f64> {
    config.analysis.as_ref().and_then(|a| a.zeta)
}

fn criterion_for(id: ExperimentId, config: &Config) -> Criterion {
    let n = config.seeds.len();
    let all = |description: &str, checks: Vec<Check>| Criterion { description: description.into(), checks, min_passing_seeds: n };
    match id {
        ExperimentId::InitZero => all("max |f(x)| over 100 inputs at zero-output init", vec![Check::le("max_abs_output", 1e-12)]),
        ExperimentId::GradCheck => all(
            "analytic vs central-difference gradients at kink-safe points, hinge and logistic, lambda in {0, 0.1}",
            vec![Check::le("max_rel_error", 1e-6)],
        ),
        ExperimentId::ForgetStep1 => all(
            "with lambda_1 = 1/eta_1 the first step forgets W0: W1 = -eta_1 grad_W",
            vec![Check::le("w1_deviation", 1e-12)],
        ),
        ExperimentId::ExactParityGradient => all(
            "closed-form uniform-parity gradient vs full enumeration, 20 random sign vectors",
            vec![Check::le("max_abs_deviation", 1e-12)],
        ),
        ExperimentId::GstarMargin => all(
            "y g*(x) >= 1 on every enumerated input and zero hinge loss",
            vec![Check::ge("min_margin", 1.0), Check::le("hinge_loss", 0.0)],
        ),
        ExperimentId::FeatureEmergence => {
            let m = config.net.m as f64;
            let checks = gradfeat::direction_catalog(&config.data)
                .iter()
                .map(|dir| Check {
                    metric: format!("census[{}]", dir.id),
                    cmp: Cmp::Ge,
                    bound: Bound::Metric { name: format!("p_hat[{}]", dir.id), scale: m / 4.0, offset: 0.0 },
                })
                .collect();
            Criterion {
                description: "nice-set census >= m p_hat / 4 for every direction".into(),
                checks,
                min_passing_seeds: required(0.9, n),
            }
        }
        ExperimentId::XorGmmSeparation | ExperimentId::ParitySeparation => {
            let (full, base) = if id == ExperimentId::XorGmmSeparation { (0.10, 0.30) } else { (0.05, 0.25) };
            Criterion {
                description: "full training best iterate beats the frozen random-feature baseline".into(),
                checks: vec![Check::le("full_error", full), Check::ge("baseline_error", base)],
                min_passing_seeds: required(0.8, n),
            }
        }
        ExperimentId::LthSubnet => Criterion {
            description: "subnetwork retrained on the nice neurons is within 0.02 of the full run".into(),
            checks: vec![Check {
                metric: "subnet_error".into(),
                cmp: Cmp::Le,
                bound: Bound::Metric { name: "full_error".into(), scale: 1.0, offset: 0.02 },
            }],
            min_passing_seeds: required(0.8, n),
        },
        ExperimentId::LinearFeatureDirection => all(
            "always-on simplified gradient points along w* with norm 2 beta",
            vec![
                Check::ge("cosine", 0.99),
                Check { metric: "rho_z".into(), cmp: Cmp::Le, bound: Bound::Const { value: 3.0 } },
            ],
        ),
    }
}

fn invalid(path: &str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig { path: path.to_string(), reason: reason.into() }
}

/// Rejects configurations an experiment cannot run on.
pub fn check_config(id: ExperimentId, config: &Config) -> Result<()> {
    config.validate()?;
    match id {
        ExperimentId::ExactParityGradient if !matches!(config.data, DataSpec::UniformParity(_)) => {
            Err(invalid("data.variant", "exact_parity_gradient needs uniform_parity data"))
        }
        ExperimentId::GstarMargin if !matches!(config.data, DataSpec::Parity(_) | DataSpec::UniformParity(_)) => {
            Err(invalid("data.variant", "gstar_margin needs parity or uniform_parity data"))
        }
        ExperimentId::LinearFeatureDirection if !matches!(config.data, DataSpec::Linear(_)) => {
            Err(invalid("data.variant", "linear_feature_direction needs linear data"))
        }
        ExperimentId::FeatureEmergence | ExperimentId::LthSubnet | ExperimentId::LinearFeatureDirection => {
            config.analysis().map(|_| ())
        }
        _ => Ok(()),
    }
}

/// Runs `id` on every seed of `config`. With `out` set, writes
/// `report.json` and per-seed trace CSVs there.
pub fn run_experiment(id: ExperimentId, config: &Config, out: Option<&Path>) -> Result<ExperimentReport> {
    check_config(id, config)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let start = Instant::now();
    let per_seed: Vec<SeedResult> =
        config.seeds.par_iter().map(|&seed| run_seed(id, config, seed, out)).collect::<Result<_>>()?;
    let wall_clock_s = start.elapsed().as_secs_f64();
    let mut warnings: Vec<String> =
        per_seed.iter().flat_map(|s| s.notes.iter().map(move |n| format!("seed {}: {n}", s.seed))).collect();
    if let Some(budget) = config.wall_clock_budget_s {
        if wall_clock_s > budget {
            warnings.push(format!("wall clock {wall_clock_s:.1}s exceeded the budget of {budget:.1}s"));
        }
    }
    let report = ExperimentReport {
        schema_version: SCHEMA_VERSION,
        experiment: id,
        config: config.clone(),
        seeds: config.seeds.clone(),
        aggregate: aggregate(&per_seed),
        per_seed,
        criterion: criterion_for(id, config),
        wall_clock_s,
        warnings,
    };
    if let Some(dir) = out {
        std::fs::write(dir.join("report.json"), report.to_json()?)?;
    }
    Ok(report)
}

fn aggregate(per_seed: &[SeedResult]) -> BTreeMap<String, Aggregate> {
    let mut names: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for s in per_seed {
        for (k, m) in &s.metrics {
            if m.value.is_finite() {
                names.entry(k).or_default().push(m.value);
            }
        }
    }
    names
        .into_iter()
        .map(|(k, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
            let min = v.iter().copied().fold(f64::INFINITY, f64::min);
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (k.to_string(), Aggregate { mean, std: var.sqrt(), min, max })
        })
        .collect()
}

fn run_seed(id: ExperimentId, config: &Config, seed: u64, out: Option<&Path>) -> Result<SeedResult> {
    match id {
        ExperimentId::InitZero => init_zero(config, seed),
        ExperimentId::GradCheck => grad_check(config, seed),
        ExperimentId::ForgetStep1 => forget_step1(config, seed),
        ExperimentId::ExactParityGradient => exact_parity_gradient(config, seed),
        ExperimentId::GstarMargin => gstar_margin(config, seed),
        ExperimentId::FeatureEmergence => feature_emergence(config, seed),
        ExperimentId::XorGmmSeparation | ExperimentId::ParitySeparation => separation(config, seed, out),
        ExperimentId::LthSubnet => lth_subnet(config, seed, out),
        ExperimentId::LinearFeatureDirection => linear_feature_direction(config, seed),
    }
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

fn init_zero(config: &Config, seed: u64) -> Result<SeedResult> {
    let params = config.init(seed)?;
    let batch = config.data.sample(100, derive_seed(seed, "init-zero", 0))?;
    let f = params.forward_batch(batch.xs())?;
    let mut r = SeedResult::new(seed);
    r.put("max_abs_output", max_abs(f.iter().copied()), "net::init_symmetric + forward_batch");
    Ok(r)
}

const GRAD_CHECK_CONFIGS: usize = 5;
const GRAD_CHECK_BATCH: usize = 8;
const KINK_MARGIN: f64 = 1e-3;
const FD_STEP: f64 = 1e-6;

/// A random, non-symmetric network and batch where no ReLU and no hinge is
/// within `KINK_MARGIN` of its kink.
fn kink_safe_point(config: &Config, seed: u64, index: u64) -> Result<(NetworkParams, Batch)> {
    let d = config.data.d();
    for attempt in 0..1000u64 {
        let tag = index * 1000 + attempt;
        let mut rng = stream(seed, "grad-check", tag);
        let m = 1 + (rng.random::<u32>() % 2) as usize;
        let width = 4 * m;
        let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
        let a = Array1::from_shape_fn(width, |_| gauss());
        let w = Array2::from_shape_fn((d, width), |_| gauss() / (d as f64).sqrt());
        let b = Array1::from_shape_fn(width, |_| 0.5 * gauss());
        let params = NetworkParams::from_parts(a, w, b)?;
        let batch = config.data.sample(GRAD_CHECK_BATCH, derive_seed(seed, "grad-check-data", tag))?;
        let pre = batch.xs().dot(&params.w()) - &params.b();
        if pre.iter().any(|v| v.abs() < KINK_MARGIN) {
            continue;
        }
        let f = params.forward_batch(batch.xs())?;
        if f.iter().zip(batch.ys()).any(|(fx, y)| (y * fx - 1.0).abs() < KINK_MARGIN) {
            continue;
        }
        return Ok((params, batch));
    }
    Err(Error::arg("grad_check", "no kink-safe point found in 1000 attempts"))
}

fn regularized_loss(params: &NetworkParams, batch: &Batch, kind: LossKind, lambda: f64) -> Result<f64> {
    let reg = params.a().dot(&params.a()) + params.w().iter().map(|v| v * v).sum::<f64>();
    Ok(net::empirical_loss(params, batch, kind)? + 0.5 * lambda * reg)
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale = numeric.iter().map(|v| v * v).sum::<f64>().sqrt().max(analytic.iter().map(|v| v * v).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn grad_check(config: &Config, seed: u64) -> Result<SeedResult> {
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for c in 0..GRAD_CHECK_CONFIGS as u64 {
        let (params, batch) = kink_safe_point(config, seed, c)?;
        for kind in [LossKind::Hinge, LossKind::Logistic] {
            for lambda in [0.0, 0.1] {
                let g = net::batch_gradients(&params, &batch, kind, lambda)?;
                let analytic: Vec<f64> = g.a.iter().chain(g.w.iter()).copied().collect();
                let mut numeric = Vec::with_capacity(analytic.len());
                let (a0, w0, b0) = (params.a().to_owned(), params.w().to_owned(), params.b().to_owned());
                let eval = |a: Array1<f64>, w: Array2<f64>| -> Result<f64> {
                    regularized_loss(&NetworkParams::from_parts(a, w, b0.clone())?, &batch, kind, lambda)
                };
                for i in 0..a0.len() {
                    let (mut plus, mut minus) = (a0.clone(), a0.clone());
                    plus[i] += FD_STEP;
                    minus[i] -= FD_STEP;
                    numeric.push((eval(plus, w0.clone())? - eval(minus, w0.clone())?) / (2.0 * FD_STEP));
                }
                for idx in ndarray::indices(w0.dim()) {
                    let (mut plus, mut minus) = (w0.clone(), w0.clone());
                    plus[idx] += FD_STEP;
                    minus[idx] -= FD_STEP;
                    numeric.push((eval(a0.clone(), plus)? - eval(a0.clone(), minus)?) / (2.0 * FD_STEP));
                }
                worst = worst.max(relative_error(&analytic, &numeric));
                checked += 1;
            }
        }
    }
    let mut r = SeedResult::new(seed);
    r.put("max_rel_error", worst, "net::batch_gradients vs central differences");
    r.put("checks", checked as f64, "harness::grad_check");
    Ok(r)
}

fn forget_step1(config: &Config, seed: u64) -> Result<SeedResult> {
    let params0 = config.init(seed)?;
    let data = DataSource::Distribution { spec: &config.data, seed };
    let batch = data.batch(1, config.schedule.batch_size, config.schedule.fresh_batch_per_step)?;
    let first = trainer::first_step(&params0, &batch, &config.schedule, config.loss, &TrainOptions::default())?;
    let eta = config.schedule.eta_1;
    let w1 = first.params1.w();
    let dev = max_abs(w1.iter().zip(first.grads.w.iter()).map(|(w, g)| w + eta * g));
    let mut r = SeedResult::new(seed);
    r.put("w1_deviation", dev, "trainer::first_step");
    r.put("lambda_1", config.schedule.lambda_1(), "config.schedule");
    r.put("grad_w_max", max_abs(first.grads.w.iter().copied()), "trainer::first_step");
    Ok(r)
}

const PARITY_GRADIENT_DRAWS: usize = 20;

fn exact_parity_gradient(config: &Config, seed: u64) -> Result<SeedResult> {
    let DataSpec::UniformParity(spec) = &config.data else { unreachable!("checked by check_config") };
    let support = enumerate(&config.data)?;
    let mut rng = stream(seed, "parity-gradient", 0);
    let mut worst = 0.0f64;
    for _ in 0..PARITY_GRADIENT_DRAWS {
        let w = Array1::from_shape_fn(spec.d(), |_| if rng.random::<bool>() { 1.0 } else { -1.0 });
        let b = rng.random_range(-0.999..0.999);
        let exact = gradfeat::simplified_gradient(w.view(), b, FeatureSource::Exact(&support))?;
        let formula = gradfeat::uniform_parity_gradient_formula(spec.support(), w.view());
        worst = worst.max(max_abs(exact.g.iter().zip(&formula).map(|(e, f)| e - f)));
    }
    let mut r = SeedResult::new(seed);
    r.put("max_abs_deviation", worst, "gradfeat::simplified_gradient(Exact) vs uniform_parity_gradient_formula");
    r.put("support_size", support.len() as f64, "distributions::enumerate");
    Ok(r)
}

fn gstar_margin(config: &Config, seed: u64) -> Result<SeedResult> {
    let net = oracle::build_gstar(&config.data, mixture_zeta(config))?;
    let support = enumerate(&config.data)?;
    let f = net.forward_batch(support.xs.view())?;
    let margins: Vec<f64> = f.iter().zip(&support.ys).map(|(fx, y)| y * fx).collect();
    let hinge = margins.iter().zip(&support.weights).map(|(z, p)| p * LossKind::Hinge.value(*z)).sum::<f64>();
    let mc = oracle::estimate_opt(&net, &config.data, LossKind::Hinge, oracle::MIN_OPT_SAMPLES, seed)?;
    let mut r = SeedResult::new(seed);
    r.put("min_margin", margins.iter().copied().fold(f64::INFINITY, f64::min), "oracle::build_gstar over enumerate");
    r.put("hinge_loss", hinge, "oracle::build_gstar over enumerate");
    r.put("mc_hinge_loss", mc.loss, "oracle::estimate_opt");
    r.put("bounds_conform", if net.conforms() { 1.0 } else { 0.0 }, "oracle::OracleNet::conforms");
    r.put("width", net.width() as f64, "oracle::build_gstar");
    r.notes.extend(net.warnings.iter().cloned());
    Ok(r)
}

fn feature_emergence(config: &Config, seed: u64) -> Result<SeedResult> {
    let an = config.analysis()?;
    let dirs = gradfeat::direction_catalog(&config.data);
    let batch = config.data.sample(an.feature_samples, derive_seed(seed, "feature-batch", 0))?;
    let query = FeatureSetQuery {
        directions: dirs.clone(),
        gamma: an.gamma,
        norm_kind: an.norm_kind,
        b_g: an.b_g,
        b_g1: an.b_g1,
        trials: an.trials,
    };
    let law = InitLaw::Gaussian { sigma_w: config.net.sigma_w, b_tilde: config.net.b_tilde };
    let draws = gradfeat::draw_feature_samples(law, an.trials, FeatureSource::Batch(&batch), seed)?;
    let probs = gradfeat::feature_prob_from_draws(&query, &draws)?;
    let params0 = config.init(seed)?;
    let grads = net::batch_gradients(&params0, &batch, config.loss, 0.0)?;
    let census = gradfeat::nice_set_census(&params0, grads.w.view(), &dirs, an.gamma, an.b_g, an.b_g1, an.norm_kind)?;
    let mut r = SeedResult::new(seed);
    for (p, c) in probs.iter().zip(&census.entries) {
        r.put(format!("p_hat[{}]", p.id), p.p_hat, "gradfeat::estimate_feature_prob");
        r.put(format!("census[{}]", c.id), c.count as f64, "gradfeat::nice_set_census");
    }
    Ok(r)
}

struct SeedData {
    eval: Batch,
    test: Batch,
}

fn seed_data(config: &Config, seed: u64) -> Result<SeedData> {
    let eval = config.data.sample(config.eval.n_eval, derive_seed(seed, "eval", 0))?;
    let test = match config.eval.n_test {
        Some(n) => config.data.sample(n, derive_seed(seed, "test", 0))?,
        None => eval.clone(),
    };
    Ok(SeedData { eval, test })
}

fn write_trace(out: Option<&Path>, seed: u64, run: &str, trace: &trainer::TrainTrace) -> Result<()> {
    if let Some(dir) = out {
        trace.write_csv(&dir.join(format!("seed-{seed}-{run}.csv")))?;
    }
    Ok(())
}

fn separation(config: &Config, seed: u64, out: Option<&Path>) -> Result<SeedResult> {
    let params0 = config.init(seed)?;
    let sd = seed_data(config, seed)?;
    let data = DataSource::Distribution { spec: &config.data, seed };
    let full = trainer::train(&params0, data, &config.schedule, config.loss, &sd.eval, &TrainOptions::default())?.outcome;
    let base = oracle::random_feature_baseline(&params0, data, &config.schedule, config.loss, &sd.eval)?;
    write_trace(out, seed, "full", &full.trace)?;
    write_trace(out, seed, "baseline", &base.trace)?;
    let mut r = SeedResult::new(seed);
    r.put("full_error", trainer::eval_error(&full.best, &sd.test)?, "trainer::train best iterate on test set");
    r.put("full_eval_error", full.trace.best_iterate().error, "trainer::train best iterate on eval set");
    r.put("full_best_t", full.trace.best_iterate().t as f64, "trainer::train");
    r.put("baseline_error", trainer::eval_error(&base.best, &sd.test)?, "oracle::random_feature_baseline on test set");
    r.put("baseline_eval_error", base.trace.best_iterate().error, "oracle::random_feature_baseline on eval set");
    r.put("baseline_best_t", base.trace.best_iterate().t as f64, "oracle::random_feature_baseline");
    Ok(r)
}

fn lth_subnet(config: &Config, seed: u64, out: Option<&Path>) -> Result<SeedResult> {
    let an = config.analysis()?;
    let fraction = an.lth_budget_fraction.unwrap_or(0.1);
    let params0 = config.init(seed)?;
    let sd = seed_data(config, seed)?;
    let data = DataSource::Distribution { spec: &config.data, seed };
    let run = trainer::train(&params0, data, &config.schedule, config.loss, &sd.eval, &TrainOptions::default())?;
    write_trace(out, seed, "full", &run.outcome.trace)?;
    let mut r = SeedResult::new(seed);
    r.put("full_error", trainer::eval_error(&run.outcome.best, &sd.test)?, "trainer::train best iterate on test set");
    let budget = (fraction * params0.width() as f64).ceil() as usize;
    r.put("budget", budget as f64, "analysis.lth_budget_fraction");
    let dirs = gradfeat::direction_catalog(&config.data);
    match oracle::extract_lottery_support(&run.first, &dirs, an.gamma, an.b_g, budget) {
        Ok(support) => {
            let sub = oracle::train_subnetwork(&run.first, &support, data, &config.schedule, config.loss, &sd.eval)?;
            write_trace(out, seed, "subnet", &sub.trace)?;
            r.put("support_size", support.len() as f64, "oracle::extract_lottery_support");
            r.put("subnet_error", trainer::eval_error(&sub.best, &sd.test)?, "oracle::train_subnetwork best iterate on test set");
        }
        Err(Error::EmptyNiceSet(id)) => {
            r.notes.push(format!("empty nice set for {id}; subnetwork not trained"));
            r.put("support_size", 0.0, "oracle::extract_lottery_support");
        }
        Err(e) => return Err(e),
    }
    Ok(r)
}

fn linear_feature_direction(config: &Config, seed: u64) -> Result<SeedResult> {
    let DataSpec::Linear(spec) = &config.data else { unreachable!("checked by check_config") };
    let an = config.analysis()?;
    let batch = config.data.sample(an.feature_samples, derive_seed(seed, "linear-feature", 0))?;
    // b = -1 with w = 0 keeps every indicator on.
    let w = Array1::zeros(spec.d());
    let est = gradfeat::simplified_gradient(w.view(), -1.0, FeatureSource::Batch(&batch))?;
    let w_star = spec.w_star();
    let cosine = est.g.dot(&w_star) / est.norm;
    let se = est.std_err.iter().zip(&est.g).map(|(s, g)| (s * g / est.norm).powi(2)).sum::<f64>().sqrt();
    let mut r = SeedResult::new(seed);
    r.put("cosine", cosine, "gradfeat::simplified_gradient");
    r.put("rho_hat", est.norm, "gradfeat::simplified_gradient");
    r.put("rho", spec.rho(), "LinearSpec::rho");
    r.put("rho_std_err", se, "gradfeat::simplified_gradient");
    r.put("rho_z", (est.norm - spec.rho()).abs() / se, "gradfeat::simplified_gradient");
    Ok(r)
}
