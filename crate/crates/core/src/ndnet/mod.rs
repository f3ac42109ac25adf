//! Dense multilayer perceptrons with hand-written reverse-mode gradients.
//!
//! Parameters live in one flat [`ParamVector`] per network, laid out layer by
//! layer as: weights (row-major, `out x in`), biases, then layer-norm gain and
//! offset when that layer enables normalization. Each layer computes
//!
//! ```text
//! z = W x + b  ->  dropout(z)  ->  layer_norm(z)  ->  activation
//! ```
//!
//! with every stage optional except the affine map. Dropout is inverted (kept
//! units are divided by the keep probability) and its masks come from a
//! [`DropoutKey`], so a forward pass and the backward pass that follows it see
//! the same masks.

mod adam;
mod matrix;

pub use adam::{adam_step, AdamState};
pub use matrix::Matrix;

use crate::error::{Error, Result};
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};

pub const LAYER_NORM_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Layer {
    pub activation: Activation,
    pub layer_norm: bool,
    pub dropout: f64,
}

impl Layer {
    pub fn plain(activation: Activation) -> Self {
        Layer {
            activation,
            layer_norm: false,
            dropout: 0.0,
        }
    }
}

/// Topology of a dense network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetSpec {
    sizes: Vec<usize>,
    layers: Vec<Layer>,
}

impl NetSpec {
    pub fn new(sizes: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::spec("a network needs at least an input and an output size"));
        }
        if sizes.contains(&0) {
            return Err(Error::spec("layer sizes must be positive"));
        }
        if layers.len() != sizes.len() - 1 {
            return Err(Error::spec(format!(
                "{} layer sizes need {} layer descriptions, got {}",
                sizes.len(),
                sizes.len() - 1,
                layers.len()
            )));
        }
        for layer in &layers {
            if !(0.0..1.0).contains(&layer.dropout) {
                return Err(Error::spec(format!("dropout rate {} outside [0, 1)", layer.dropout)));
            }
        }
        Ok(NetSpec { sizes, layers })
    }

    /// Plain MLP: `hidden` activation on every hidden layer, `output` on the last.
    pub fn mlp(sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        let n = sizes.len().saturating_sub(1);
        let layers = (0..n)
            .map(|i| Layer::plain(if i + 1 == n { output } else { hidden }))
            .collect();
        NetSpec::new(sizes.to_vec(), layers)
    }

    /// Enables dropout and/or layer norm on every hidden layer.
    pub fn with_hidden_regularization(mut self, dropout: f64, layer_norm: bool) -> Result<Self> {
        let n = self.layers.len();
        for layer in &mut self.layers[..n - 1] {
            layer.dropout = dropout;
            layer.layer_norm = layer_norm;
        }
        NetSpec::new(self.sizes, self.layers)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn has_dropout(&self) -> bool {
        self.layers.iter().any(|l| l.dropout > 0.0)
    }

    fn layer_param_count(&self, l: usize) -> usize {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        o * i + o + if self.layers[l].layer_norm { 2 * o } else { 0 }
    }

    pub fn param_count(&self) -> usize {
        (0..self.layers.len()).map(|l| self.layer_param_count(l)).sum()
    }

    /// Uniform fan-in initialization; the last layer is multiplied by `final_scale`.
    pub fn init_params<R: rand::Rng + ?Sized>(&self, rng: &mut R, final_scale: f64) -> ParamVector {
        let mut values = Vec::with_capacity(self.param_count());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (fan_in, out) = (self.sizes[l], self.sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let scale = if l == last { final_scale } else { 1.0 };
            for _ in 0..(out * fan_in + out) {
                values.push(rng.random_range(-bound..bound) * scale);
            }
            if layer.layer_norm {
                values.extend(std::iter::repeat_n(1.0, out));
                values.extend(std::iter::repeat_n(0.0, out));
            }
        }
        ParamVector(values)
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::spec(format!(
                "parameter vector has {} entries, network needs {}",
                params.len(),
                self.param_count()
            )));
        }
        Ok(())
    }
}

/// Flat parameter vector of one network.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(n: usize) -> Self {
        ParamVector(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `u32` little-endian length followed by little-endian `f64` values.
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let len = u32::try_from(self.0.len())
            .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "vector too long"))?;
        w.write_all(&len.to_le_bytes())?;
        for v in &self.0 {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> std::io::Result<Self> {
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let len = u32::from_le_bytes(len) as usize;
        let mut values = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            r.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        Ok(ParamVector(values))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 8 * self.0.len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::io::Result<Self> {
        let mut cursor = bytes;
        let pv = ParamVector::read_from(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                "trailing bytes after parameter vector",
            ));
        }
        Ok(pv)
    }
}

impl std::ops::Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector(v)
    }
}

/// Seed for the dropout masks of one forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DropoutKey(pub u64);

struct LayerNormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

struct LayerTape {
    mask: Option<Vec<f64>>,
    norm: Option<LayerNormCache>,
    /// Pre-activation values, kept for ReLU layers only.
    relu_input: Option<Matrix>,
}

/// Everything the backward pass needs from a forward pass.
pub struct Tape {
    /// `acts[0]` is the input batch, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Matrix>,
    layers: Vec<LayerTape>,
}

impl Tape {
    pub fn output(&self) -> &Matrix {
        self.acts.last().expect("tape always holds the input")
    }

    pub fn into_output(mut self) -> Matrix {
        self.acts.pop().expect("tape always holds the input")
    }
}

pub struct Gradients {
    /// Batch-averaged parameter gradient (empty when not requested).
    pub params: Vec<f64>,
    /// Per-row input gradients, not averaged.
    pub inputs: Matrix,
}

/// Slices of one layer's parameters.
struct LayerParams<'a> {
    w: &'a [f64],
    b: &'a [f64],
    gain: Option<&'a [f64]>,
    offset: Option<&'a [f64]>,
}

fn split_layers<'a>(spec: &NetSpec, params: &'a [f64]) -> Vec<(usize, LayerParams<'a>)> {
    let mut out = Vec::with_capacity(spec.layers.len());
    let mut offset = 0;
    for (l, layer) in spec.layers.iter().enumerate() {
        let (i, o) = (spec.sizes[l], spec.sizes[l + 1]);
        let start = offset;
        let w = &params[offset..offset + o * i];
        offset += o * i;
        let b = &params[offset..offset + o];
        offset += o;
        let (gain, off) = if layer.layer_norm {
            let g = &params[offset..offset + o];
            let beta = &params[offset + o..offset + 2 * o];
            offset += 2 * o;
            (Some(g), Some(beta))
        } else {
            (None, None)
        };
        out.push((
            start,
            LayerParams {
                w,
                b,
                gain,
                offset: off,
            },
        ));
    }
    out
}

/// Forward pass over a batch, keeping what backward needs.
///
/// `key = None` means evaluation mode: dropout layers pass values through.
pub fn forward_tape(spec: &NetSpec, params: &[f64], inputs: &Matrix, key: Option<DropoutKey>) -> Result<Tape> {
    spec.check_params(params)?;
    if inputs.cols() != spec.input_dim() {
        return Err(Error::spec(format!(
            "input width {} does not match network input {}",
            inputs.cols(),
            spec.input_dim()
        )));
    }
    let n = inputs.rows();
    let mut mask_rng = match key {
        Some(k) if spec.has_dropout() => Some(ChaCha8Rng::seed_from_u64(k.0)),
        _ => None,
    };
    let mut acts = Vec::with_capacity(spec.layers.len() + 1);
    acts.push(inputs.clone());
    let mut tapes = Vec::with_capacity(spec.layers.len());

    for ((l, layer), (_, lp)) in spec.layers.iter().enumerate().zip(split_layers(spec, params)) {
        let (in_dim, out_dim) = (spec.sizes[l], spec.sizes[l + 1]);
        let x = &acts[l];
        let mut z = Matrix::zeros(n, out_dim);
        for r in 0..n {
            let xr = x.row(r);
            let zr = z.row_mut(r);
            for (j, zj) in zr.iter_mut().enumerate() {
                let wr = &lp.w[j * in_dim..(j + 1) * in_dim];
                let mut acc = lp.b[j];
                for (wk, xk) in wr.iter().zip(xr) {
                    acc += wk * xk;
                }
                *zj = acc;
            }
        }

        let mask = match (&mut mask_rng, layer.dropout > 0.0) {
            (Some(rng), true) => {
                let keep = 1.0 - layer.dropout;
                let scale = 1.0 / keep;
                let m: Vec<f64> = (0..n * out_dim)
                    .map(|_| {
                        if rng.random::<f64>() >= layer.dropout {
                            scale
                        } else {
                            0.0
                        }
                    })
                    .collect();
                for (zv, mv) in z.as_mut_slice().iter_mut().zip(&m) {
                    *zv *= mv;
                }
                Some(m)
            }
            _ => None,
        };

        let norm = if let (Some(g), Some(beta)) = (lp.gain, lp.offset) {
            let mut xhat = vec![0.0; n * out_dim];
            let mut inv_std = vec![0.0; n];
            for r in 0..n {
                let zr = z.row_mut(r);
                let mean = zr.iter().sum::<f64>() / out_dim as f64;
                let var = zr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / out_dim as f64;
                let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                inv_std[r] = inv;
                for j in 0..out_dim {
                    let xh = (zr[j] - mean) * inv;
                    xhat[r * out_dim + j] = xh;
                    zr[j] = xh * g[j] + beta[j];
                }
            }
            Some(LayerNormCache { xhat, inv_std })
        } else {
            None
        };

        let relu_input = (layer.activation == Activation::Relu).then(|| z.clone());
        if layer.activation != Activation::Identity {
            for v in z.as_mut_slice() {
                *v = layer.activation.apply(*v);
            }
        }
        acts.push(z);
        tapes.push(LayerTape { mask, norm, relu_input });
    }
    Ok(Tape { acts, layers: tapes })
}

pub fn forward_batch(spec: &NetSpec, params: &[f64], inputs: &Matrix, key: Option<DropoutKey>) -> Result<Matrix> {
    Ok(forward_tape(spec, params, inputs, key)?.into_output())
}

pub fn forward(spec: &NetSpec, params: &[f64], input: &[f64], key: Option<DropoutKey>) -> Result<Vec<f64>> {
    let m = Matrix::from_vec(1, input.len(), input.to_vec())?;
    Ok(forward_batch(spec, params, &m, key)?.into_vec())
}

/// Reverse pass for a recorded forward pass.
///
/// Parameter gradients are averaged over the batch; input gradients are per
/// row. Set `want_params = false` when only input gradients are needed.
pub fn backward_tape(
    spec: &NetSpec,
    params: &[f64],
    tape: &Tape,
    upstream: &Matrix,
    want_params: bool,
) -> Result<Gradients> {
    spec.check_params(params)?;
    let out = tape.output();
    if upstream.rows() != out.rows() || upstream.cols() != out.cols() {
        return Err(Error::spec(format!(
            "upstream gradient is {}x{}, network output is {}x{}",
            upstream.rows(),
            upstream.cols(),
            out.rows(),
            out.cols()
        )));
    }
    let n = out.rows();
    let mut grad = if want_params {
        vec![0.0; params.len()]
    } else {
        Vec::new()
    };
    let mut delta = upstream.clone();
    let layer_params = split_layers(spec, params);

    for l in (0..spec.layers.len()).rev() {
        let layer = &spec.layers[l];
        let lt = &tape.layers[l];
        let (start, lp) = &layer_params[l];
        let (in_dim, out_dim) = (spec.sizes[l], spec.sizes[l + 1]);
        let x = &tape.acts[l];
        let h = &tape.acts[l + 1];

        // delta: d/d(output) -> d/d(pre-activation)
        if layer.activation != Activation::Identity {
            for (d, y) in delta.as_mut_slice().iter_mut().zip(h.as_slice()) {
                *d *= layer.activation.derivative_from_output(*y);
            }
        }

        if let (Some(norm), Some(g)) = (&lt.norm, lp.gain) {
            let w_off = start + out_dim * in_dim + out_dim;
            for r in 0..n {
                let du = delta.row_mut(r);
                let xhat = &norm.xhat[r * out_dim..(r + 1) * out_dim];
                if want_params {
                    for j in 0..out_dim {
                        grad[w_off + j] += du[j] * xhat[j];
                        grad[w_off + out_dim + j] += du[j];
                    }
                }
                let mut mean_dx = 0.0;
                let mut mean_dx_xhat = 0.0;
                for j in 0..out_dim {
                    let dxh = du[j] * g[j];
                    mean_dx += dxh;
                    mean_dx_xhat += dxh * xhat[j];
                }
                mean_dx /= out_dim as f64;
                mean_dx_xhat /= out_dim as f64;
                let inv = norm.inv_std[r];
                for j in 0..out_dim {
                    let dxh = du[j] * g[j];
                    du[j] = inv * (dxh - mean_dx - xhat[j] * mean_dx_xhat);
                }
            }
        }

        if let Some(mask) = &lt.mask {
            for (d, m) in delta.as_mut_slice().iter_mut().zip(mask) {
                *d *= m;
            }
        }

        let mut dx = Matrix::zeros(n, in_dim);
        for r in 0..n {
            let dz = delta.row(r);
            let xr = x.row(r);
            let dxr = dx.row_mut(r);
            for j in 0..out_dim {
                let dj = dz[j];
                if dj == 0.0 {
                    continue;
                }
                let wr = &lp.w[j * in_dim..(j + 1) * in_dim];
                for (dxk, wk) in dxr.iter_mut().zip(wr) {
                    *dxk += wk * dj;
                }
                if want_params {
                    let gw = &mut grad[start + j * in_dim..start + (j + 1) * in_dim];
                    for (gk, xk) in gw.iter_mut().zip(xr) {
                        *gk += dj * xk;
                    }
                    grad[start + out_dim * in_dim + j] += dj;
                }
            }
        }
        delta = dx;
    }

    if want_params && n > 0 {
        let inv_n = 1.0 / n as f64;
        for g in &mut grad {
            *g *= inv_n;
        }
    }
    Ok(Gradients {
        params: grad,
        inputs: delta,
    })
}

/// Batch-averaged parameter gradient of `mean_r <upstream_r, f(x_r)>`.
pub fn backward(
    spec: &NetSpec,
    params: &[f64],
    inputs: &Matrix,
    upstream: &Matrix,
    key: Option<DropoutKey>,
) -> Result<Vec<f64>> {
    if upstream.rows() != inputs.rows() {
        return Err(Error::spec(format!(
            "upstream has {} rows for a batch of {}",
            upstream.rows(),
            inputs.rows()
        )));
    }
    let tape = forward_tape(spec, params, inputs, key)?;
    Ok(backward_tape(spec, params, &tape, upstream, true)?.params)
}

/// `(1 - tau) * target + tau * online`, in place.
pub fn soft_update(target: &mut [f64], online: &[f64], tau: f64) -> Result<()> {
    if target.len() != online.len() {
        return Err(Error::spec(format!(
            "soft update between vectors of length {} and {}",
            target.len(),
            online.len()
        )));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::spec(format!("tau {tau} outside [0, 1]")));
    }
    let keep = 1.0 - tau;
    for (t, o) in target.iter_mut().zip(online) {
        *t = keep * *t + tau * o;
    }
    Ok(())
}

/// Max over parameters of `|analytic - numeric| / max(1, |analytic|, |numeric|)`
/// where `numeric` is the central difference of `loss` with step `eps`.
pub fn grad_check<F>(params: &[f64], analytic: &[f64], eps: f64, mut loss: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length mismatch");
    let mut probe = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let up = loss(&probe);
        probe[i] = orig - eps;
        let down = loss(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let denom = 1f64.max(analytic[i].abs()).max(numeric.abs());
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

/// Smallest `|pre-activation|` over every ReLU unit and batch row.
///
/// Finite-difference harnesses use it to keep probes away from ReLU kinks,
/// where central differences are not a valid oracle.
pub fn min_relu_margin(spec: &NetSpec, params: &[f64], inputs: &Matrix, key: Option<DropoutKey>) -> Result<f64> {
    let tape = forward_tape(spec, params, inputs, key)?;
    Ok(tape
        .layers
        .iter()
        .filter_map(|l| l.relu_input.as_ref())
        .flat_map(|m| m.as_slice().iter())
        .fold(f64::INFINITY, |acc, v| acc.min(v.abs())))
}
