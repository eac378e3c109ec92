//! Gradient-descent training: a special first step with `λ⁽¹⁾ = 1/η⁽¹⁾`
//! that wipes out the initialization, followed by plain online steps.

use std::borrow::Cow;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Axis};
use serde::{Deserialize, Serialize};

use crate::distributions::DataSpec;
use crate::error::{Error, Result};
use crate::net::{self, Batch, Gradients, LossKind, NetworkParams, Reduction};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperSchedule {
    pub eta_1: f64,
    pub eta: f64,
    /// Defaults to `1 / eta_1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_1: Option<f64>,
    /// Total number of steps `T`, the first step included.
    pub steps: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub freeze_first_layer_after_step1: bool,
    #[serde(default = "yes")]
    pub fresh_batch_per_step: bool,
}

fn yes() -> bool {
    true
}

impl HyperSchedule {
    pub fn lambda_1(&self) -> f64 {
        self.lambda_1.unwrap_or(1.0 / self.eta_1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_1 > 0.0 && self.eta_1.is_finite()) {
            return Err(Error::arg("eta_1", format!("must be positive, got {}", self.eta_1)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::arg("eta", format!("must be positive, got {}", self.eta)));
        }
        if !(self.lambda_1() >= 0.0 && self.lambda_1().is_finite()) {
            return Err(Error::arg("lambda_1", format!("must be nonnegative, got {}", self.lambda_1())));
        }
        if self.steps < 1 {
            return Err(Error::arg("steps", "need at least one step"));
        }
        if self.batch_size < 1 {
            return Err(Error::arg("batch_size", "must be positive"));
        }
        Ok(())
    }

    /// Steps whose iterate is evaluated: all of them up to 1000 steps, else
    /// every `⌈T/1000⌉`-th plus the last.
    pub fn is_eval_step(&self, t: usize) -> bool {
        let stride = self.steps.div_ceil(1000).max(1);
        t == self.steps || t % stride == 0 || stride == 1
    }
}

/// Training data: fresh draws from a distribution or one fixed dataset.
#[derive(Clone, Copy, Debug)]
pub enum DataSource<'a> {
    Distribution { spec: &'a DataSpec, seed: u64 },
    Fixed(&'a Batch),
}

impl DataSource<'_> {
    /// The batch used at step `t` (1-based). A fixed dataset is used whole;
    /// a distribution yields a new sample per step when `fresh` is set and
    /// one reused sample otherwise.
    pub fn batch(&self, t: usize, n: usize, fresh: bool) -> Result<Cow<'_, Batch>> {
        match *self {
            DataSource::Fixed(b) => Ok(Cow::Borrowed(b)),
            DataSource::Distribution { spec, seed } => {
                let index = if fresh { t as u64 } else { 0 };
                Ok(Cow::Owned(spec.sample(n, rng::derive_seed(seed, "train-batch", index))?))
            }
        }
    }

    fn is_reused(&self, fresh: bool) -> bool {
        matches!(self, DataSource::Fixed(_)) || !fresh
    }
}

/// Which parameters move.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainOptions {
    /// Keep `W` at its initial value for every step, first included.
    pub freeze_first_layer: bool,
    /// Neurons allowed to move; `a_i` outside the mask is pinned to zero and
    /// `w_i` is frozen.
    pub mask: Option<Vec<bool>>,
    pub reduction: Reduction,
}

impl TrainOptions {
    fn check(&self, width: usize) -> Result<()> {
        if let Some(mask) = &self.mask {
            if mask.len() != width {
                return Err(Error::DimensionMismatch { expected: width, got: mask.len() });
            }
        }
        Ok(())
    }

    fn apply_mask(&self, params: &mut NetworkParams) {
        if let Some(mask) = &self.mask {
            for (a, &keep) in params.a_mut().iter_mut().zip(mask) {
                if !keep {
                    *a = 0.0;
                }
            }
        }
    }

    fn mask_gradients(&self, g: &mut Gradients) {
        if let Some(mask) = &self.mask {
            for (i, &keep) in mask.iter().enumerate() {
                if !keep {
                    g.a[i] = 0.0;
                    g.w.column_mut(i).fill(0.0);
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    /// Empirical loss of the iterate on the evaluation set.
    pub loss: f64,
    pub error: f64,
    pub a_norm: f64,
    /// `max_i ‖w_i⁽ᵗ⁾ − w_i⁽¹⁾‖₂`.
    pub w_drift: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestIterate {
    pub t: usize,
    pub error: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<StepRecord>,
    pub best: Option<BestIterate>,
}

impl TrainTrace {
    pub fn best_iterate(&self) -> BestIterate {
        self.best.expect("a trace always holds at least one record")
    }

    pub fn final_record(&self) -> &StepRecord {
        self.records.last().expect("a trace always holds at least one record")
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

/// Outcome of the first step, kept for feature analysis.
#[derive(Clone, Debug)]
pub struct FirstStep {
    pub params0: NetworkParams,
    /// Unregularized gradients at `params0` on the first batch.
    pub grads: Gradients,
    pub params1: NetworkParams,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best: NetworkParams,
    pub last: NetworkParams,
    pub trace: TrainTrace,
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub first: FirstStep,
    pub outcome: TrainOutcome,
}

/// Fraction of samples with `sign(f(x)) ≠ y`, where `sign(0) = +1`.
pub fn eval_error(params: &NetworkParams, batch: &Batch) -> Result<f64> {
    batch.require_binary()?;
    let f = params.forward_batch(batch.xs())?;
    Ok(error_of_outputs(&f, batch))
}

fn error_of_outputs(f: &Array1<f64>, batch: &Batch) -> f64 {
    let wrong = f.iter().zip(batch.ys()).filter(|(&fx, &y)| (if fx >= 0.0 { 1.0 } else { -1.0 }) != y).count();
    wrong as f64 / batch.n() as f64
}

/// One descent step `p ← (1 − ηλ)p − η∇` on the selected parameters, with
/// `grads` unregularized.
fn apply_step(params: &mut NetworkParams, grads: &Gradients, eta: f64, lambda: f64, move_w: bool) {
    let decay = 1.0 - eta * lambda;
    let a = params.a_mut();
    if decay != 1.0 {
        *a *= decay;
    }
    a.scaled_add(-eta, &grads.a);
    if move_w {
        let w = params.w_mut();
        if decay != 1.0 {
            *w *= decay;
        }
        w.scaled_add(-eta, &grads.w);
    }
}

/// Step 1 with `(η⁽¹⁾, λ⁽¹⁾)` on both layers.
pub fn first_step(
    params0: &NetworkParams,
    batch: &Batch,
    sched: &HyperSchedule,
    kind: LossKind,
    opts: &TrainOptions,
) -> Result<FirstStep> {
    sched.validate()?;
    opts.check(params0.width())?;
    let mut start = params0.clone();
    opts.apply_mask(&mut start);
    let mut grads = net::gradients_inner(&start, batch, kind, 0.0, opts.reduction, !opts.freeze_first_layer)?;
    opts.mask_gradients(&mut grads);
    let mut params1 = start.clone();
    apply_step(&mut params1, &grads, sched.eta_1, sched.lambda_1(), !opts.freeze_first_layer);
    opts.apply_mask(&mut params1);
    Ok(FirstStep { params0: start, grads, params1 })
}

struct Tracker<'a> {
    eval_set: &'a Batch,
    kind: LossKind,
    w1: ndarray::Array2<f64>,
    trace: TrainTrace,
    best: Option<NetworkParams>,
}

impl<'a> Tracker<'a> {
    fn new(params1: &NetworkParams, eval_set: &'a Batch, kind: LossKind) -> Result<Self> {
        eval_set.require_binary()?;
        if eval_set.d() != params1.d() {
            return Err(Error::DimensionMismatch { expected: params1.d(), got: eval_set.d() });
        }
        Ok(Self { eval_set, kind, w1: params1.w().to_owned(), trace: TrainTrace::default(), best: None })
    }

    fn record(&mut self, t: usize, params: &NetworkParams) -> Result<()> {
        let f = params.forward_batch(self.eval_set.xs())?;
        let error = error_of_outputs(&f, self.eval_set);
        let loss = f.iter().zip(self.eval_set.ys()).map(|(&fx, &y)| self.kind.value(y * fx)).sum::<f64>()
            / self.eval_set.n() as f64;
        let drift = (&params.w() - &self.w1)
            .map_axis(Axis(0), |c| c.dot(&c).sqrt())
            .fold(0.0f64, |acc, &v| acc.max(v));
        self.trace.records.push(StepRecord { t, loss, error, a_norm: params.a().dot(&params.a()).sqrt(), w_drift: drift });
        if self.trace.best.is_none_or(|b| error < b.error) {
            self.trace.best = Some(BestIterate { t, error });
            self.best = Some(params.clone());
        }
        Ok(())
    }
}

/// Steps `2..=T` starting from the post-step-1 parameters.
pub fn continue_training(
    params1: &NetworkParams,
    data: DataSource<'_>,
    sched: &HyperSchedule,
    kind: LossKind,
    eval_set: &Batch,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    sched.validate()?;
    opts.check(params1.width())?;
    let mut params = params1.clone();
    opts.apply_mask(&mut params);
    let mut tracker = Tracker::new(&params, eval_set, kind)?;
    tracker.record(1, &params)?;
    let move_w = !(opts.freeze_first_layer || sched.freeze_first_layer_after_step1);
    let reused = if data.is_reused(sched.fresh_batch_per_step) {
        Some(data.batch(1, sched.batch_size, false)?.into_owned())
    } else {
        None
    };
    for t in 2..=sched.steps {
        let fresh;
        let batch = match &reused {
            Some(b) => b,
            None => {
                fresh = data.batch(t, sched.batch_size, true)?;
                fresh.as_ref()
            }
        };
        let mut grads = net::gradients_inner(&params, batch, kind, 0.0, opts.reduction, move_w)?;
        opts.mask_gradients(&mut grads);
        apply_step(&mut params, &grads, sched.eta, 0.0, move_w);
        if sched.is_eval_step(t) {
            tracker.record(t, &params)?;
        }
    }
    let best = tracker.best.take().expect("at least one record");
    Ok(TrainOutcome { best, last: params, trace: tracker.trace })
}

/// The full algorithm: first step, then steps `2..=T`.
pub fn train(
    params0: &NetworkParams,
    data: DataSource<'_>,
    sched: &HyperSchedule,
    kind: LossKind,
    eval_set: &Batch,
    opts: &TrainOptions,
) -> Result<TrainRun> {
    sched.validate()?;
    let batch1 = data.batch(1, sched.batch_size, sched.fresh_batch_per_step)?;
    let first = first_step(params0, &batch1, sched, kind, opts)?;
    let outcome = continue_training(&first.params1, data, sched, kind, eval_set, opts)?;
    Ok(TrainRun { first, outcome })
}

/// Machine-readable summary of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub preset: String,
    pub seed: u64,
    pub best_iterate: BestIterate,
    pub final_record: StepRecord,
    pub loss: LossKind,
    pub loss_definition: String,
}

impl TrainSummary {
    pub fn new(preset: impl Into<String>, seed: u64, trace: &TrainTrace, kind: LossKind) -> Self {
        Self {
            preset: preset.into(),
            seed,
            best_iterate: trace.best_iterate(),
            final_record: *trace.final_record(),
            loss: kind,
            loss_definition: kind.normalization().to_string(),
        }
    }
}
