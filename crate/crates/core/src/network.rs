//! The embedding network `f(x) = tanh(W2 · sigmoid(W1 · x + b1) + b2)`, the triplet
//! hinge loss over it, and hand-derived gradients.
//!
//! Both layers are square (`dim × dim`), weights stored row-major so that row `i` of a
//! matrix holds the weights feeding output unit `i`.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::transform::squared_l2;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub dim: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Batch gradient with the same layout as [`NetworkParams`], plus the batch loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub margin: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { margin: 1.0 }
    }
}

/// Feature vectors of one triplet.
#[derive(Debug, Clone, Copy)]
pub struct TripletInput<'a> {
    pub anchor: &'a [f64],
    pub positive: &'a [f64],
    pub negative: &'a [f64],
}

pub const TENSOR_NAMES: [&str; 4] = ["W1", "b1", "W2", "b2"];

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `out = W · x + b` for a square row-major `W`.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let d = b.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * d..(i + 1) * d];
        *o = b[i] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Hidden and output activations of one forward pass.
#[derive(Debug, Clone)]
struct Activations {
    hidden: Vec<f64>,
    output: Vec<f64>,
}

impl NetworkParams {
    /// Glorot-uniform weights in `[-sqrt(6 / 2d), sqrt(6 / 2d)]`, zero biases.
    pub fn init(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Data("network dimension must be at least 1".into()));
        }
        let limit = (6.0 / (2.0 * dim as f64)).sqrt();
        let mut rng = stream_rng(seed, Stream::Init, dim as u64);
        let mut draw = || (0..dim * dim).map(|_| rng.random_range(-limit..=limit)).collect::<Vec<_>>();
        let w1 = draw();
        let w2 = draw();
        Ok(NetworkParams {
            dim,
            w1,
            b1: vec![0.0; dim],
            w2,
            b2: vec![0.0; dim],
        })
    }

    pub fn zeros(dim: usize) -> Self {
        NetworkParams {
            dim,
            w1: vec![0.0; dim * dim],
            b1: vec![0.0; dim],
            w2: vec![0.0; dim * dim],
            b2: vec![0.0; dim],
        }
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Checks shapes and finiteness.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        if d == 0 || self.w1.len() != d * d || self.w2.len() != d * d || self.b1.len() != d || self.b2.len() != d {
            return Err(Error::Data(format!("parameter shapes do not match dim {d}")));
        }
        if !self.is_finite() {
            return Err(Error::Data("non-finite network parameter".into()));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Data(format!(
                "input has dimension {}, network expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    fn activations(&self, x: &[f64]) -> Activations {
        let mut hidden = vec![0.0; self.dim];
        affine(&self.w1, &self.b1, x, &mut hidden);
        hidden.iter_mut().for_each(|h| *h = sigmoid(*h));
        let mut output = vec![0.0; self.dim];
        affine(&self.w2, &self.b2, &hidden, &mut output);
        output.iter_mut().for_each(|o| *o = o.tanh());
        Activations { hidden, output }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.activations(x).output)
    }
}

impl Gradients {
    pub fn zeros(dim: usize) -> Self {
        Gradients {
            loss: 0.0,
            w1: vec![0.0; dim * dim],
            b1: vec![0.0; dim],
            w2: vec![0.0; dim * dim],
            b2: vec![0.0; dim],
        }
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// Adds `other` element-wise, loss included.
    pub fn accumulate(&mut self, other: &Gradients) {
        self.loss += other.loss;
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
    }
}

fn check_batch(params: &NetworkParams, batch: &[TripletInput<'_>], config: &LossConfig) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Data("empty triplet batch".into()));
    }
    if !(config.margin > 0.0) {
        return Err(Error::Data(format!("margin must be positive, got {}", config.margin)));
    }
    for t in batch {
        params.check_input(t.anchor)?;
        params.check_input(t.positive)?;
        params.check_input(t.negative)?;
    }
    Ok(())
}

/// Hinge value of one triplet given embeddings; positive part taken by the caller.
#[inline]
fn hinge_argument(a: &[f64], p: &[f64], n: &[f64], margin: f64) -> f64 {
    squared_l2(a, p) - squared_l2(a, n) + margin
}

/// Σ over the batch of `[‖f(a)−f(p)‖² − ‖f(a)−f(n)‖² + margin]₊`.
pub fn triplet_loss(params: &NetworkParams, batch: &[TripletInput<'_>], config: &LossConfig) -> Result<f64> {
    check_batch(params, batch, config)?;
    Ok(batch
        .iter()
        .map(|t| {
            let a = params.activations(t.anchor).output;
            let p = params.activations(t.positive).output;
            let n = params.activations(t.negative).output;
            hinge_argument(&a, &p, &n, config.margin).max(0.0)
        })
        .sum())
}

/// Accumulates the gradient of one leg given `∂L/∂f(x)` in `upstream`.
fn backprop_leg(
    params: &NetworkParams,
    x: &[f64],
    act: &Activations,
    upstream: &[f64],
    grads: &mut Gradients,
    scratch: &mut [f64],
) {
    let d = params.dim;
    // dz2 = upstream ⊙ (1 − e²), stored in scratch[..d]; dh in scratch[d..]
    let (dz2, dh) = scratch.split_at_mut(d);
    for i in 0..d {
        let e = act.output[i];
        dz2[i] = upstream[i] * (1.0 - e * e);
    }
    dh.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..d {
        let g = dz2[i];
        if g == 0.0 {
            continue;
        }
        grads.b2[i] += g;
        let grow = &mut grads.w2[i * d..(i + 1) * d];
        let wrow = &params.w2[i * d..(i + 1) * d];
        for j in 0..d {
            grow[j] += g * act.hidden[j];
            dh[j] += g * wrow[j];
        }
    }
    for i in 0..d {
        let h = act.hidden[i];
        let g = dh[i] * h * (1.0 - h);
        if g == 0.0 {
            continue;
        }
        grads.b1[i] += g;
        let grow = &mut grads.w1[i * d..(i + 1) * d];
        for (gw, xv) in grow.iter_mut().zip(x) {
            *gw += g * xv;
        }
    }
}

/// Exact gradient of [`triplet_loss`] with respect to every parameter.
///
/// Triplets whose hinge argument is `<= 0` contribute nothing (subgradient 0 at the kink).
pub fn backward(params: &NetworkParams, batch: &[TripletInput<'_>], config: &LossConfig) -> Result<Gradients> {
    check_batch(params, batch, config)?;
    let mut grads = Gradients::zeros(params.dim);
    for t in batch {
        accumulate_triplet(params, t, config, &mut grads);
    }
    Ok(grads)
}

/// Triplets per work unit in [`batch_gradient`].
pub const GRADIENT_CHUNK: usize = 4;

/// Same quantity as [`backward`], evaluated on fixed chunks of [`GRADIENT_CHUNK`]
/// triplets in parallel and summed in chunk order. The result depends only on the batch,
/// never on the thread count.
pub fn batch_gradient(params: &NetworkParams, batch: &[TripletInput<'_>], config: &LossConfig) -> Result<Gradients> {
    check_batch(params, batch, config)?;
    if batch.len() <= GRADIENT_CHUNK {
        return backward(params, batch, config);
    }
    let partials: Vec<Gradients> = batch
        .par_chunks(GRADIENT_CHUNK)
        .map(|chunk| {
            let mut g = Gradients::zeros(params.dim);
            for t in chunk {
                accumulate_triplet(params, t, config, &mut g);
            }
            g
        })
        .collect();
    let mut iter = partials.into_iter();
    let mut total = iter.next().expect("non-empty batch");
    for g in iter {
        total.accumulate(&g);
    }
    Ok(total)
}

/// Adds one triplet's loss and gradient into `grads`. Inputs must already be validated.
pub(crate) fn accumulate_triplet(
    params: &NetworkParams,
    t: &TripletInput<'_>,
    config: &LossConfig,
    grads: &mut Gradients,
) {
    let d = params.dim;
    let a = params.activations(t.anchor);
    let p = params.activations(t.positive);
    let n = params.activations(t.negative);
    let value = hinge_argument(&a.output, &p.output, &n.output, config.margin);
    if value <= 0.0 {
        return;
    }
    grads.loss += value;

    // ∂/∂f(a) = 2(f(n) − f(p)), ∂/∂f(p) = −2(f(a) − f(p)), ∂/∂f(n) = 2(f(a) − f(n))
    let mut up = vec![0.0; d];
    let mut scratch = vec![0.0; 2 * d];
    for i in 0..d {
        up[i] = 2.0 * (n.output[i] - p.output[i]);
    }
    backprop_leg(params, t.anchor, &a, &up, grads, &mut scratch);
    for i in 0..d {
        up[i] = -2.0 * (a.output[i] - p.output[i]);
    }
    backprop_leg(params, t.positive, &p, &up, grads, &mut scratch);
    for i in 0..d {
        up[i] = 2.0 * (a.output[i] - n.output[i]);
    }
    backprop_leg(params, t.negative, &n, &up, grads, &mut scratch);
}

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Tensor name and flat index of the worst coordinate.
    pub worst: Option<(&'static str, usize)>,
    pub checked: usize,
    pub pass: bool,
}

/// Coordinates checked per tensor (all of them when the tensor is smaller).
pub const GRAD_CHECK_SAMPLES: usize = 200;

/// Gradients below this magnitude are compared in absolute rather than relative terms,
/// since central differences carry roughly `eps · loss / step` of rounding noise.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Relative error `|a − b| / max(|a|, |b|, floor)`, zero when both vanish.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR)
}

/// Compares [`backward`] with central differences of [`triplet_loss`].
pub fn grad_check(
    params: &NetworkParams,
    batch: &[TripletInput<'_>],
    config: &LossConfig,
    step: f64,
    tolerance: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    grad_check_with(params, batch, config, step, tolerance, seed, backward)
}

/// [`grad_check`] against an arbitrary gradient routine.
pub fn grad_check_with<F>(
    params: &NetworkParams,
    batch: &[TripletInput<'_>],
    config: &LossConfig,
    step: f64,
    tolerance: f64,
    seed: u64,
    gradient: F,
) -> Result<GradCheckReport>
where
    F: Fn(&NetworkParams, &[TripletInput<'_>], &LossConfig) -> Result<Gradients>,
{
    if !(step > 0.0) {
        return Err(Error::Data(format!("finite-difference step must be positive, got {step}")));
    }
    let analytic = gradient(params, batch, config)?;
    let mut rng = stream_rng(seed, Stream::GradCheck, 0);
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
        pass: true,
    };
    for (t, name) in TENSOR_NAMES.iter().enumerate() {
        let len = params.tensors()[t].len();
        let coords: Vec<usize> = if len <= GRAD_CHECK_SAMPLES {
            (0..len).collect()
        } else {
            rand::seq::index::sample(&mut rng, len, GRAD_CHECK_SAMPLES).into_vec()
        };
        for k in coords {
            let original = params.tensors()[t][k];
            probe.tensors_mut()[t][k] = original + step;
            let plus = triplet_loss(&probe, batch, config)?;
            probe.tensors_mut()[t][k] = original - step;
            let minus = triplet_loss(&probe, batch, config)?;
            probe.tensors_mut()[t][k] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(analytic.tensors()[t][k], numeric);
            report.checked += 1;
            if err > report.max_rel_err || err.is_nan() {
                report.max_rel_err = err;
                report.worst = Some((name, k));
            }
        }
    }
    report.pass = report.max_rel_err < tolerance;
    Ok(report)
}
