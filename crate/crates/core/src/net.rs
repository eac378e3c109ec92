//! The two-layer ReLU network `f(x) = Σ_i a_i · relu(⟨w_i, x⟩ − b_i)`, its
//! symmetric zero-output initialization, losses, and hand-derived batch
//! gradients.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// A labelled sample matrix: one row per example.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    xs: Array2<f64>,
    ys: Array1<f64>,
}

impl Batch {
    pub fn new(xs: Array2<f64>, ys: Array1<f64>) -> Result<Self> {
        if xs.nrows() == 0 {
            return Err(Error::EmptyBatch);
        }
        if xs.nrows() != ys.len() {
            return Err(Error::DimensionMismatch { expected: xs.nrows(), got: ys.len() });
        }
        if let Some(&y) = ys.iter().find(|y| !(y.abs() <= 1.0)) {
            return Err(Error::arg("ys", format!("label {y} outside [-1, 1]")));
        }
        Ok(Self { xs, ys })
    }

    pub fn n(&self) -> usize {
        self.xs.nrows()
    }

    pub fn d(&self) -> usize {
        self.xs.ncols()
    }

    pub fn xs(&self) -> ArrayView2<'_, f64> {
        self.xs.view()
    }

    pub fn ys(&self) -> ArrayView1<'_, f64> {
        self.ys.view()
    }

    /// Checks that every label is exactly −1 or +1.
    pub fn require_binary(&self) -> Result<()> {
        match self.ys.iter().find(|&&y| y != 1.0 && y != -1.0) {
            Some(&y) => Err(Error::NonBinaryLabel(y)),
            None => Ok(()),
        }
    }

    /// Same inputs with every label negated.
    pub fn flipped(&self) -> Self {
        Self { xs: self.xs.clone(), ys: self.ys.mapv(|y| -y) }
    }

    pub fn into_parts(self) -> (Array2<f64>, Array1<f64>) {
        (self.xs, self.ys)
    }
}

/// Loss on the margin `z = y·f(x)`. Both kinds satisfy `ℓ(0) = 1` and are
/// 1-Lipschitz, convex and decreasing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// `max(0, 1 − z)`, with `ℓ'(1) = 0`.
    Hinge,
    /// `ln(1 + (e − 1)·e^{−z})`: the logistic loss shifted so that `ℓ(0) = 1`.
    Logistic,
}

const E_MINUS_ONE: f64 = std::f64::consts::E - 1.0;

impl LossKind {
    pub fn value(self, z: f64) -> f64 {
        match self {
            LossKind::Hinge => (1.0 - z).max(0.0),
            LossKind::Logistic => {
                // ln(1 + c e^{-z}) = ln(c) - z + ln(1 + e^{z}/c), stable for z -> -inf.
                let u = E_MINUS_ONE.ln() - z;
                if u > 0.0 {
                    u + (-u).exp().ln_1p()
                } else {
                    u.exp().ln_1p()
                }
            }
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            LossKind::Hinge => {
                if z < 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            LossKind::Logistic => {
                // -c e^{-z} / (1 + c e^{-z}) = -1 / (1 + e^{z} / c)
                -1.0 / (1.0 + (z - E_MINUS_ONE.ln()).exp())
            }
        }
    }

    /// Human-readable definition recorded in report metadata.
    pub fn normalization(self) -> &'static str {
        match self {
            LossKind::Hinge => "hinge: max(0, 1 - z)",
            LossKind::Logistic => "logistic: ln(1 + (e - 1) * exp(-z)), i.e. ln(1 + exp(-(z + c))) with c = -ln(e - 1)",
        }
    }
}

/// Parameters of the `4m`-neuron network. Column `i` of `w` is neuron `i`'s
/// weight vector. Biases are fixed at construction: no method writes `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    a: Array1<f64>,
    w: Array2<f64>,
    b: Array1<f64>,
    m: usize,
}

impl NetworkParams {
    /// Builds parameters from raw parts. Width must be a positive multiple of four.
    pub fn from_parts(a: Array1<f64>, w: Array2<f64>, b: Array1<f64>) -> Result<Self> {
        let width = a.len();
        if width == 0 || width % 4 != 0 {
            return Err(Error::arg("a", format!("width {width} is not a positive multiple of 4")));
        }
        if w.ncols() != width {
            return Err(Error::DimensionMismatch { expected: width, got: w.ncols() });
        }
        if b.len() != width {
            return Err(Error::DimensionMismatch { expected: width, got: b.len() });
        }
        if w.nrows() == 0 {
            return Err(Error::arg("w", "input dimension must be positive"));
        }
        Ok(Self { a, w, b, m: width / 4 })
    }

    /// Quarter-width `m`.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn width(&self) -> usize {
        4 * self.m
    }

    pub fn d(&self) -> usize {
        self.w.nrows()
    }

    pub fn a(&self) -> ArrayView1<'_, f64> {
        self.a.view()
    }

    pub fn w(&self) -> ArrayView2<'_, f64> {
        self.w.view()
    }

    pub fn b(&self) -> ArrayView1<'_, f64> {
        self.b.view()
    }

    pub(crate) fn a_mut(&mut self) -> &mut Array1<f64> {
        &mut self.a
    }

    pub(crate) fn w_mut(&mut self) -> &mut Array2<f64> {
        &mut self.w
    }

    /// Copy of these parameters with a different second layer.
    pub fn with_a(&self, a: Array1<f64>) -> Result<Self> {
        if a.len() != self.width() {
            return Err(Error::DimensionMismatch { expected: self.width(), got: a.len() });
        }
        Ok(Self { a, ..self.clone() })
    }

    pub fn forward(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        if x.len() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), got: x.len() });
        }
        Ok(relu_net_forward(self.a.view(), self.w.view(), self.b.view(), x))
    }

    pub fn forward_batch(&self, xs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if xs.ncols() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), got: xs.ncols() });
        }
        Ok(relu_net_forward_batch(self.a.view(), self.w.view(), self.b.view(), xs))
    }

    /// Hidden activations `relu(Wᵀx − b)` for every row of `xs` (n × width).
    pub fn hidden(&self, xs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if xs.ncols() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), got: xs.ncols() });
        }
        let mut pre = xs.dot(&self.w);
        pre -= &self.b;
        pre.mapv_inplace(|v| v.max(0.0));
        Ok(pre)
    }
}

/// Single-input forward pass for any width.
pub fn relu_net_forward(
    a: ArrayView1<'_, f64>,
    w: ArrayView2<'_, f64>,
    b: ArrayView1<'_, f64>,
    x: ArrayView1<'_, f64>,
) -> f64 {
    let pre = x.dot(&w);
    Zip::from(&a).and(&pre).and(&b).fold(0.0, |acc, &ai, &p, &bi| acc + ai * (p - bi).max(0.0))
}

/// Batched forward pass for any width.
pub fn relu_net_forward_batch(
    a: ArrayView1<'_, f64>,
    w: ArrayView2<'_, f64>,
    b: ArrayView1<'_, f64>,
    xs: ArrayView2<'_, f64>,
) -> Array1<f64> {
    let mut pre = xs.dot(&w);
    pre -= &b;
    pre.mapv_inplace(|v| v.max(0.0));
    pre.dot(&a)
}

/// Symmetric initialization: the first `m` neurons are Gaussian draws
/// (`a_i ~ N(0, σ_a²)`, `w_i ~ N(0, σ_w² I)`, `b_i = b̃`); neurons `m..2m`
/// negate all three; neurons `2m..4m` negate `a` and copy `w`, `b`. The
/// resulting network outputs exactly zero everywhere.
///
/// Draw order is neuron by neuron: `a_i` then the `d` coordinates of `w_i`.
pub fn init_symmetric(
    m: usize,
    d: usize,
    sigma_a: f64,
    sigma_w: f64,
    b_tilde: f64,
    seed: u64,
) -> Result<NetworkParams> {
    if m == 0 {
        return Err(Error::arg("m", "must be at least 1"));
    }
    if d == 0 {
        return Err(Error::arg("d", "must be at least 1"));
    }
    if !(sigma_a > 0.0 && sigma_a.is_finite()) {
        return Err(Error::arg("sigma_a", format!("must be positive, got {sigma_a}")));
    }
    if !(sigma_w > 0.0 && sigma_w.is_finite()) {
        return Err(Error::arg("sigma_w", format!("must be positive, got {sigma_w}")));
    }
    if !b_tilde.is_finite() {
        return Err(Error::arg("b_tilde", "must be finite"));
    }
    let mut rng = rng::stream(seed, "init", 0);
    let normal_a = Normal::new(0.0, sigma_a).expect("positive std");
    let normal_w = Normal::new(0.0, sigma_w).expect("positive std");

    let width = 4 * m;
    let mut a = Array1::zeros(width);
    let mut w = Array2::zeros((d, width));
    let mut b = Array1::zeros(width);
    for i in 0..m {
        a[i] = normal_a.sample(&mut rng);
        for r in 0..d {
            w[[r, i]] = normal_w.sample(&mut rng);
        }
        b[i] = b_tilde;
    }
    for i in 0..m {
        a[i + m] = -a[i];
        b[i + m] = -b[i];
        for r in 0..d {
            w[[r, i + m]] = -w[[r, i]];
        }
    }
    for i in 0..2 * m {
        a[i + 2 * m] = -a[i];
        b[i + 2 * m] = b[i];
        for r in 0..d {
            w[[r, i + 2 * m]] = w[[r, i]];
        }
    }
    NetworkParams::from_parts(a, w, b)
}

/// How per-sample contributions are summed over a batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Single pass in sample order. Bitwise reproducible.
    #[default]
    Sequential,
    /// Samples split into fixed-size chunks reduced on the rayon pool; agrees
    /// with `Sequential` up to floating-point reassociation.
    Parallel,
}

const PARALLEL_CHUNK: usize = 256;

/// Gradient of the regularized empirical loss with respect to `a` and `W`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub a: Array1<f64>,
    pub w: Array2<f64>,
    /// Unregularized empirical loss at the evaluation point.
    pub loss: f64,
}

/// Empirical mean loss `(1/n) Σ ℓ(y·f(x))`.
pub fn empirical_loss(params: &NetworkParams, batch: &Batch, kind: LossKind) -> Result<f64> {
    let f = params.forward_batch(batch.xs())?;
    Ok(Zip::from(&f).and(batch.ys()).fold(0.0, |acc, &fx, &y| acc + kind.value(y * fx)) / batch.n() as f64)
}

/// Gradients of `(1/n) Σ ℓ(y f(x)) + (λ/2)(‖W‖_F² + ‖a‖²)`. The ReLU
/// derivative is the strict indicator `1[⟨w,x⟩ − b > 0]`; `b` gets no gradient.
pub fn batch_gradients(params: &NetworkParams, batch: &Batch, kind: LossKind, lambda: f64) -> Result<Gradients> {
    batch_gradients_with(params, batch, kind, lambda, Reduction::Sequential)
}

pub fn batch_gradients_with(
    params: &NetworkParams,
    batch: &Batch,
    kind: LossKind,
    lambda: f64,
    reduction: Reduction,
) -> Result<Gradients> {
    gradients_inner(params, batch, kind, lambda, reduction, true)
}

/// With `want_w = false` the `W` gradient is left at zero and not computed.
pub(crate) fn gradients_inner(
    params: &NetworkParams,
    batch: &Batch,
    kind: LossKind,
    lambda: f64,
    reduction: Reduction,
    want_w: bool,
) -> Result<Gradients> {
    if batch.d() != params.d() {
        return Err(Error::DimensionMismatch { expected: params.d(), got: batch.d() });
    }
    if !(lambda >= 0.0) {
        return Err(Error::arg("lambda", format!("must be nonnegative, got {lambda}")));
    }
    let n = batch.n() as f64;
    let (mut ga, mut gw, loss_sum) = match reduction {
        Reduction::Sequential => chunk_gradient(params, batch.xs(), batch.ys(), kind, want_w),
        Reduction::Parallel => {
            let starts: Vec<usize> = (0..batch.n()).step_by(PARALLEL_CHUNK).collect();
            let partials: Vec<_> = starts
                .par_iter()
                .map(|&lo| {
                    let hi = (lo + PARALLEL_CHUNK).min(batch.n());
                    chunk_gradient(
                        params,
                        batch.xs().slice(s![lo..hi, ..]),
                        batch.ys().slice(s![lo..hi]),
                        kind,
                        want_w,
                    )
                })
                .collect();
            let mut iter = partials.into_iter();
            let first = iter.next().expect("nonempty batch");
            iter.fold(first, |(mut a, mut w, l), (pa, pw, pl)| {
                a += &pa;
                w += &pw;
                (a, w, l + pl)
            })
        }
    };
    ga /= n;
    gw /= n;
    if lambda > 0.0 {
        ga.scaled_add(lambda, &params.a);
        if want_w {
            gw.scaled_add(lambda, &params.w);
        }
    }
    Ok(Gradients { a: ga, w: gw, loss: loss_sum / n })
}

/// Unnormalized sums over one block of samples.
fn chunk_gradient(
    params: &NetworkParams,
    xs: ArrayView2<'_, f64>,
    ys: ArrayView1<'_, f64>,
    kind: LossKind,
    want_w: bool,
) -> (Array1<f64>, Array2<f64>, f64) {
    let mut pre = xs.dot(&params.w);
    pre -= &params.b;
    let hidden = pre.mapv(|v| v.max(0.0));
    let f = hidden.dot(&params.a);

    let mut loss = 0.0;
    let mut coef = Array1::zeros(ys.len());
    for ((c, &fx), &y) in coef.iter_mut().zip(f.iter()).zip(ys.iter()) {
        let z = y * fx;
        loss += kind.value(z);
        *c = kind.derivative(z) * y;
    }
    let ga = hidden.t().dot(&coef);
    if !want_w {
        return (ga, Array2::zeros(params.w.dim()), loss);
    }

    // q[l, i] = coef_l · a_i · 1[pre_li > 0]
    let mut q = pre;
    Zip::from(q.rows_mut()).and(&coef).for_each(|mut row, &c| {
        Zip::from(&mut row).and(&params.a).for_each(|v, &ai| {
            *v = if *v > 0.0 { c * ai } else { 0.0 };
        });
    });
    let gw = xs.t().dot(&q);
    (ga, gw, loss)
}

/// Euclidean norm of each column.
pub(crate) fn column_norms(w: ArrayView2<'_, f64>) -> Array1<f64> {
    w.map_axis(Axis(0), |col| col.dot(&col).sqrt())
}
