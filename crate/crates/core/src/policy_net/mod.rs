//! Multi-input convolutional policy network.
//!
//! Two branches read the observation: a weight-shared stack of 1-D
//! convolutions along time over each strategy's (return, vol) pair, and a
//! second convolution stack over the context matrix. Their flattened features
//! feed dense merge layers and a softmax head that emits portfolio weights.
//! Gradients are exact reverse-mode, computed layer by layer against cached
//! forward activations; no external learning framework is involved.

mod gradient;
mod io;

pub use gradient::{episode_gradient, GradientSet};
pub use io::{load_checkpoint, save_checkpoint};

use crate::error::{Error, Result};
use crate::rl_env::{ActionVector, Observation};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Input channels per strategy row: returns and rolling vol.
pub const ASSET_CHANNELS: usize = 2;

/// Pointwise nonlinearity used after every convolution and merge layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the post-activation value. For ReLU the
    /// derivative at exactly zero is taken as zero.
    fn grad_from_post(&self, post: f64) -> f64 {
        match self {
            Activation::Relu => {
                if post > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - post * post,
        }
    }
}

/// One 1-D convolution layer: `kernel` taps along time, `channels` output
/// maps. Stride 1, no padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub channels: usize,
}

/// Network topology. The asset branch runs the same convolution stack over
/// every strategy row (two input channels: returns and vol); the context
/// branch treats context rows as input channels of a single stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkArch {
    /// Number of strategies; also the softmax output dimension.
    pub n_assets: usize,
    /// Rows in the observation's context block.
    pub context_rows: usize,
    /// Observation window length; must match the environment's.
    pub window: usize,
    pub asset_conv: Vec<ConvSpec>,
    pub context_conv: Vec<ConvSpec>,
    /// Dense layer widths between the concatenated features and the head.
    pub merge: Vec<usize>,
    pub activation: Activation,
}

impl NetworkArch {
    /// Default desk-scale topology: two kernel-3, 8-channel convolutions per
    /// branch, one dense layer of width 32, ReLU, 60-day window.
    pub fn standard(n_assets: usize, context_rows: usize) -> Self {
        let conv = vec![ConvSpec { kernel: 3, channels: 8 }, ConvSpec { kernel: 3, channels: 8 }];
        Self {
            n_assets,
            context_rows,
            window: 60,
            asset_conv: conv.clone(),
            context_conv: conv,
            merge: vec![32],
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_assets == 0 {
            return Err(Error::Config("network needs at least one asset".into()));
        }
        if self.context_rows == 0 {
            return Err(Error::Config("network needs at least one context row".into()));
        }
        if self.window < 2 {
            return Err(Error::Config(format!("window {} < 2", self.window)));
        }
        if self.merge.contains(&0) {
            return Err(Error::Config("zero-width merge layer".into()));
        }
        self.dims().map(|_| ())
    }

    fn conv_chain(&self, c_in0: usize, convs: &[ConvSpec], offset: &mut usize) -> Result<Vec<ConvDims>> {
        let mut dims = Vec::with_capacity(convs.len());
        let mut c_in = c_in0;
        let mut len = self.window;
        for spec in convs {
            if spec.kernel == 0 || spec.channels == 0 {
                return Err(Error::Config("zero-size convolution".into()));
            }
            if spec.kernel > len {
                return Err(Error::Config(format!(
                    "kernel {} exceeds remaining length {len}",
                    spec.kernel
                )));
            }
            let out_len = len - spec.kernel + 1;
            let w_off = *offset;
            *offset += spec.channels * c_in * spec.kernel;
            let b_off = *offset;
            *offset += spec.channels;
            dims.push(ConvDims {
                c_in,
                c_out: spec.channels,
                k: spec.kernel,
                in_len: len,
                out_len,
                w_off,
                b_off,
            });
            c_in = spec.channels;
            len = out_len;
        }
        Ok(dims)
    }

    /// Resolved per-layer shapes and flat-vector offsets.
    pub(crate) fn dims(&self) -> Result<Dims> {
        let mut offset = 0usize;
        let asset = self.conv_chain(ASSET_CHANNELS, &self.asset_conv, &mut offset)?;
        let ctx = self.conv_chain(self.context_rows, &self.context_conv, &mut offset)?;
        let (a_ch, a_len) = asset
            .last()
            .map_or((ASSET_CHANNELS, self.window), |d| (d.c_out, d.out_len));
        let (c_ch, c_len) = ctx
            .last()
            .map_or((self.context_rows, self.window), |d| (d.c_out, d.out_len));
        let asset_flat = self.n_assets * a_ch * a_len;
        let ctx_flat = c_ch * c_len;
        let mut dense = Vec::with_capacity(self.merge.len());
        let mut in_dim = asset_flat + ctx_flat;
        for width in &self.merge {
            let w_off = offset;
            offset += width * in_dim;
            let b_off = offset;
            offset += width;
            dense.push(DenseDims { in_dim, out_dim: *width, w_off, b_off });
            in_dim = *width;
        }
        let head = DenseDims {
            in_dim,
            out_dim: self.n_assets,
            w_off: offset,
            b_off: offset + self.n_assets * in_dim,
        };
        let total = head.b_off + self.n_assets;
        Ok(Dims { asset, ctx, dense, head, asset_flat, ctx_flat, total })
    }

    pub fn n_params(&self) -> Result<usize> {
        Ok(self.dims()?.total)
    }

    /// Human-readable layout: layer name, flat offset, and tensor shape.
    pub fn layout(&self) -> Result<Vec<LayoutEntry>> {
        let dims = self.dims()?;
        let mut entries = Vec::new();
        let mut conv_entries = |prefix: &str, chain: &[ConvDims]| {
            for (l, d) in chain.iter().enumerate() {
                entries.push(LayoutEntry {
                    name: format!("{prefix}{l}.w"),
                    offset: d.w_off,
                    shape: vec![d.c_out, d.c_in, d.k],
                });
                entries.push(LayoutEntry {
                    name: format!("{prefix}{l}.b"),
                    offset: d.b_off,
                    shape: vec![d.c_out],
                });
            }
        };
        conv_entries("asset_conv", &dims.asset);
        conv_entries("context_conv", &dims.ctx);
        let mut dense_entry = |name: String, d: &DenseDims| {
            entries.push(LayoutEntry {
                name: format!("{name}.w"),
                offset: d.w_off,
                shape: vec![d.out_dim, d.in_dim],
            });
            entries.push(LayoutEntry { name: format!("{name}.b"), offset: d.b_off, shape: vec![d.out_dim] });
        };
        for (l, d) in dims.dense.iter().enumerate() {
            dense_entry(format!("dense{l}"), d);
        }
        dense_entry("head".into(), &dims.head);
        Ok(entries)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    #[allow(dead_code)]
    pub in_len: usize,
    pub out_len: usize,
    pub w_off: usize,
    pub b_off: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DenseDims {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w_off: usize,
    pub b_off: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Dims {
    pub asset: Vec<ConvDims>,
    pub ctx: Vec<ConvDims>,
    pub dense: Vec<DenseDims>,
    pub head: DenseDims,
    pub asset_flat: usize,
    pub ctx_flat: usize,
    pub total: usize,
}

/// One named slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutEntry {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl LayoutEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Network parameters: the architecture plus one flat value vector laid out
/// per [`NetworkArch::layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    arch: NetworkArch,
    values: Vec<f64>,
}

impl PolicyParams {
    pub fn new(arch: NetworkArch, values: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let total = arch.n_params()?;
        if values.len() != total {
            return Err(Error::Shape(format!("{} params vs layout total {total}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite network parameter".into()));
        }
        Ok(Self { arch, values })
    }

    pub fn arch(&self) -> &NetworkArch {
        &self.arch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn entry(&self, name: &str) -> Result<LayoutEntry> {
        self.arch
            .layout()?
            .into_iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Shape(format!("no layer named {name}")))
    }

    /// View of one named layer's parameters.
    pub fn layer(&self, name: &str) -> Result<&[f64]> {
        let e = self.entry(name)?;
        Ok(&self.values[e.offset..e.offset + e.len()])
    }

    /// Mutable view of one named layer's parameters.
    pub fn layer_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let e = self.entry(name)?;
        Ok(&mut self.values[e.offset..e.offset + e.len()])
    }
}

/// Deterministic fan-in-scaled uniform initialization: weights drawn from
/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero.
pub fn init_params(arch: &NetworkArch, seed: u64) -> Result<PolicyParams> {
    arch.validate()?;
    let total = arch.n_params()?;
    let mut values = vec![0.0; total];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for entry in arch.layout()? {
        if !entry.name.ends_with(".w") {
            continue;
        }
        let fan_in: usize = entry.shape[1..].iter().product();
        let scale = (1.0 / fan_in as f64).sqrt();
        for v in values[entry.offset..entry.offset + entry.len()].iter_mut() {
            *v = scale * (2.0 * rng.random::<f64>() - 1.0);
        }
    }
    PolicyParams::new(arch.clone(), values)
}

/// Numerically stable softmax.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cached activations from one forward pass, consumed by the backward pass.
pub(crate) struct ForwardCache {
    asset_in: Vec<Array2<f64>>,
    asset_post: Vec<Vec<Array2<f64>>>,
    ctx_in: Array2<f64>,
    ctx_post: Vec<Array2<f64>>,
    features: Vec<f64>,
    dense_post: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

fn conv_layer_forward(x: &Array2<f64>, params: &[f64], d: &ConvDims, act: Activation) -> Array2<f64> {
    let w = &params[d.w_off..d.w_off + d.c_out * d.c_in * d.k];
    let b = &params[d.b_off..d.b_off + d.c_out];
    let mut y = Array2::zeros((d.c_out, d.out_len));
    for o in 0..d.c_out {
        for t in 0..d.out_len {
            let mut acc = b[o];
            for i in 0..d.c_in {
                let w_row = &w[(o * d.c_in + i) * d.k..(o * d.c_in + i + 1) * d.k];
                for (kk, wk) in w_row.iter().enumerate() {
                    acc += wk * x[[i, t + kk]];
                }
            }
            y[[o, t]] = act.apply(acc);
        }
    }
    y
}

/// Backward through one conv layer. `ybar_post` is the gradient at the
/// post-activation output; weight/bias gradients accumulate into `grad` and
/// the input gradient is returned.
fn conv_layer_backward(
    x: &Array2<f64>,
    y_post: &Array2<f64>,
    ybar_post: &Array2<f64>,
    params: &[f64],
    grad: &mut [f64],
    d: &ConvDims,
    act: Activation,
) -> Array2<f64> {
    let w = &params[d.w_off..d.w_off + d.c_out * d.c_in * d.k];
    let mut xbar = Array2::zeros(x.dim());
    for o in 0..d.c_out {
        let mut bsum = 0.0;
        for t in 0..d.out_len {
            let pre_bar = ybar_post[[o, t]] * act.grad_from_post(y_post[[o, t]]);
            if pre_bar == 0.0 {
                continue;
            }
            bsum += pre_bar;
            for i in 0..d.c_in {
                let base = (o * d.c_in + i) * d.k;
                for kk in 0..d.k {
                    grad[d.w_off + base + kk] += pre_bar * x[[i, t + kk]];
                    xbar[[i, t + kk]] += pre_bar * w[base + kk];
                }
            }
        }
        grad[d.b_off + o] += bsum;
    }
    xbar
}

fn dense_layer_forward(x: &[f64], params: &[f64], d: &DenseDims, act: Option<Activation>) -> Vec<f64> {
    let w = &params[d.w_off..d.w_off + d.out_dim * d.in_dim];
    let b = &params[d.b_off..d.b_off + d.out_dim];
    let mut y = Vec::with_capacity(d.out_dim);
    for o in 0..d.out_dim {
        let row = &w[o * d.in_dim..(o + 1) * d.in_dim];
        let mut acc = b[o];
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        y.push(match act {
            Some(a) => a.apply(acc),
            None => acc,
        });
    }
    y
}

fn dense_layer_backward(
    x: &[f64],
    y_post: &[f64],
    ybar_post: &[f64],
    params: &[f64],
    grad: &mut [f64],
    d: &DenseDims,
    act: Option<Activation>,
) -> Vec<f64> {
    let w = &params[d.w_off..d.w_off + d.out_dim * d.in_dim];
    let mut xbar = vec![0.0; d.in_dim];
    for o in 0..d.out_dim {
        let pre_bar = match act {
            Some(a) => ybar_post[o] * a.grad_from_post(y_post[o]),
            None => ybar_post[o],
        };
        if pre_bar == 0.0 {
            continue;
        }
        grad[d.b_off + o] += pre_bar;
        let row = &w[o * d.in_dim..(o + 1) * d.in_dim];
        for i in 0..d.in_dim {
            grad[d.w_off + o * d.in_dim + i] += pre_bar * x[i];
            xbar[i] += pre_bar * row[i];
        }
    }
    xbar
}

fn flatten_into(out: &mut Vec<f64>, m: &Array2<f64>) {
    for row in m.rows() {
        out.extend(row.iter());
    }
}

fn unflatten(slice: &[f64], rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_vec((rows, cols), slice.to_vec()).expect("flat feature shape")
}

fn check_obs(arch: &NetworkArch, obs: &Observation) -> Result<()> {
    if obs.n_assets() != arch.n_assets
        || obs.window() != arch.window
        || obs.context_rows() != arch.context_rows
    {
        return Err(Error::Shape(format!(
            "observation {}x{} with {} context rows vs network {}x{} with {}",
            obs.n_assets(),
            obs.window(),
            obs.context_rows(),
            arch.n_assets,
            arch.window,
            arch.context_rows
        )));
    }
    Ok(())
}

/// Forward pass retaining every activation needed for the backward pass.
pub(crate) fn forward_cached(params: &PolicyParams, obs: &Observation) -> Result<(ActionVector, ForwardCache)> {
    let arch = &params.arch;
    check_obs(arch, obs)?;
    let dims = arch.dims()?;
    let p = &params.values;
    let n = arch.n_assets;
    let w = arch.window;

    let mut asset_in = Vec::with_capacity(n);
    let mut asset_post = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = Array2::zeros((ASSET_CHANNELS, w));
        for t in 0..w {
            x[[0, t]] = obs.returns[[i, t]];
            x[[1, t]] = obs.vols[[i, t]];
        }
        let mut posts = Vec::with_capacity(dims.asset.len());
        {
            let mut cur = &x;
            for d in &dims.asset {
                let y = conv_layer_forward(cur, p, d, arch.activation);
                posts.push(y);
                cur = posts.last().expect("just pushed");
            }
        }
        asset_in.push(x);
        asset_post.push(posts);
    }

    let ctx_in = obs.context.clone();
    let mut ctx_post = Vec::with_capacity(dims.ctx.len());
    {
        let mut cur = &ctx_in;
        for d in &dims.ctx {
            let y = conv_layer_forward(cur, p, d, arch.activation);
            ctx_post.push(y);
            cur = ctx_post.last().expect("just pushed");
        }
    }

    let mut features = Vec::with_capacity(dims.asset_flat + dims.ctx_flat);
    for i in 0..n {
        flatten_into(&mut features, asset_post[i].last().unwrap_or(&asset_in[i]));
    }
    flatten_into(&mut features, ctx_post.last().unwrap_or(&ctx_in));

    let mut dense_post: Vec<Vec<f64>> = Vec::with_capacity(dims.dense.len());
    {
        let mut cur: &[f64] = &features;
        for d in &dims.dense {
            let y = dense_layer_forward(cur, p, d, Some(arch.activation));
            dense_post.push(y);
            cur = dense_post.last().expect("just pushed");
        }
    }
    let last: &[f64] = dense_post.last().map_or(&features, |v| v);
    let logits = dense_layer_forward(last, p, &dims.head, None);
    let probs = softmax(&logits);
    let action = ActionVector::new(probs.clone())?;
    let cache = ForwardCache { asset_in, asset_post, ctx_in, ctx_post, features, dense_post, probs };
    Ok((action, cache))
}

/// Deterministic policy evaluation: observation in, simplex weights out.
pub fn forward(params: &PolicyParams, obs: &Observation) -> Result<ActionVector> {
    forward_cached(params, obs).map(|(a, _)| a)
}

/// Backward pass: given the gradient of the objective with respect to the
/// action probabilities, accumulate the parameter gradient into `grad`.
pub(crate) fn backward(
    params: &PolicyParams,
    cache: &ForwardCache,
    action_bar: &[f64],
    grad: &mut [f64],
) -> Result<()> {
    let arch = &params.arch;
    let dims = arch.dims()?;
    let p = &params.values;
    if action_bar.len() != arch.n_assets || grad.len() != dims.total {
        return Err(Error::Shape("gradient buffer shape".into()));
    }

    // Softmax vector-Jacobian product: zbar_j = p_j (abar_j - p . abar).
    let dot: f64 = cache.probs.iter().zip(action_bar).map(|(pj, aj)| pj * aj).sum();
    let zbar: Vec<f64> = cache.probs.iter().zip(action_bar).map(|(pj, aj)| pj * (aj - dot)).collect();

    let head_in: &[f64] = cache.dense_post.last().map_or(&cache.features, |v| v);
    let mut xbar = dense_layer_backward(head_in, &[], &zbar, p, grad, &dims.head, None);

    for (l, d) in dims.dense.iter().enumerate().rev() {
        let input: &[f64] = if l == 0 { &cache.features } else { &cache.dense_post[l - 1] };
        xbar = dense_layer_backward(input, &cache.dense_post[l], &xbar, p, grad, d, Some(arch.activation));
    }

    let (asset_bar, ctx_bar) = xbar.split_at(dims.asset_flat);

    let (c_ch, c_len) = dims
        .ctx
        .last()
        .map_or((arch.context_rows, arch.window), |d| (d.c_out, d.out_len));
    let mut cbar = unflatten(ctx_bar, c_ch, c_len);
    for (l, d) in dims.ctx.iter().enumerate().rev() {
        let input = if l == 0 { &cache.ctx_in } else { &cache.ctx_post[l - 1] };
        cbar = conv_layer_backward(input, &cache.ctx_post[l], &cbar, p, grad, d, arch.activation);
    }

    let (a_ch, a_len) = dims
        .asset
        .last()
        .map_or((ASSET_CHANNELS, arch.window), |d| (d.c_out, d.out_len));
    let per_asset = a_ch * a_len;
    for i in 0..arch.n_assets {
        let mut abar = unflatten(&asset_bar[i * per_asset..(i + 1) * per_asset], a_ch, a_len);
        for (l, d) in dims.asset.iter().enumerate().rev() {
            let input = if l == 0 { &cache.asset_in[i] } else { &cache.asset_post[i][l - 1] };
            abar = conv_layer_backward(input, &cache.asset_post[i][l], &abar, p, grad, d, arch.activation);
        }
    }
    Ok(())
}

/// Adam optimizer state for gradient-ascent updates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Fresh state with the defaults lr=0.01, beta1=0.9, beta2=0.999,
    /// epsilon=1e-8.
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            step: 0,
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn with_lr(dim: usize, lr: f64) -> Self {
        Self { lr, ..Self::new(dim) }
    }
}

/// One Adam ascent step: parameters move along the (bias-corrected) gradient
/// direction, maximizing the objective.
pub fn adam_update(params: &mut PolicyParams, grads: &GradientSet, state: &mut AdamState) -> Result<()> {
    let g = grads.values();
    if g.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::Shape(format!(
            "{} grads, {} moments vs {} params",
            g.len(),
            state.m.len(),
            params.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let values = params.values_mut();
    for i in 0..g.len() {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g[i] * g[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        values[i] += state.lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy_arch() -> NetworkArch {
        NetworkArch {
            n_assets: 2,
            context_rows: 3,
            window: 6,
            asset_conv: vec![ConvSpec { kernel: 3, channels: 2 }],
            context_conv: vec![ConvSpec { kernel: 3, channels: 2 }],
            merge: vec![],
            activation: Activation::Relu,
        }
    }

    fn toy_obs(seed: u64, arch: &NetworkArch) -> Observation {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |scale: f64| scale * (2.0 * rng.random::<f64>() - 1.0);
        let n = arch.n_assets;
        let w = arch.window;
        let returns = Array2::from_shape_fn((n, w), |_| draw(0.02));
        let vols = Array2::from_shape_fn((n, w), |_| draw(0.01).abs());
        let context = Array2::from_shape_fn((arch.context_rows, w), |_| draw(0.5));
        Observation::new(returns, vols, context).unwrap()
    }

    #[test]
    fn layout_is_contiguous_and_complete() {
        let arch = NetworkArch::standard(9, 4);
        let layout = arch.layout().unwrap();
        let mut expected_offset = 0;
        for entry in &layout {
            assert_eq!(entry.offset, expected_offset, "layer {}", entry.name);
            expected_offset += entry.len();
        }
        assert_eq!(expected_offset, arch.n_params().unwrap());
        let names: Vec<&str> = layout.iter().map(|e| e.name.as_str()).collect();
        assert!(names.contains(&"asset_conv0.w"));
        assert!(names.contains(&"context_conv1.b"));
        assert!(names.contains(&"dense0.w"));
        assert!(names.contains(&"head.b"));
    }

    #[test]
    fn arch_validation_rejects_degenerate_shapes() {
        let mut arch = NetworkArch::standard(3, 4);
        arch.window = 4;
        // Two kernel-3 layers need at least 5 input steps.
        assert!(arch.validate().is_err());
        let mut arch = NetworkArch::standard(0, 4);
        arch.n_assets = 0;
        assert!(arch.validate().is_err());
        let mut arch = NetworkArch::standard(3, 4);
        arch.merge = vec![0];
        assert!(arch.validate().is_err());
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let arch = NetworkArch::standard(4, 5);
        let a = init_params(&arch, 7).unwrap();
        let b = init_params(&arch, 7).unwrap();
        let c = init_params(&arch, 8).unwrap();
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
        for name in ["asset_conv0.b", "dense0.b", "head.b"] {
            assert!(a.layer(name).unwrap().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn initial_policy_is_near_uniform_across_seeds() {
        let arch = NetworkArch { window: 30, ..NetworkArch::standard(9, 4) };
        let obs = toy_obs(1234, &arch);
        for seed in 0..100 {
            let params = init_params(&arch, seed).unwrap();
            let action = forward(&params, &obs).unwrap();
            let max = action.weights().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = action.weights().iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(max - min < 0.2, "seed {seed}: spread {}", max - min);
        }
    }

    #[test]
    fn forward_output_is_on_the_simplex() {
        let arch = toy_arch();
        let params = init_params(&arch, 3).unwrap();
        let obs = toy_obs(9, &arch);
        let action = forward(&params, &obs).unwrap();
        let sum: f64 = action.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(action.weights().iter().all(|w| *w >= 0.0 && w.is_finite()));
    }

    #[test]
    fn softmax_is_shift_invariant_and_overflow_safe() {
        let z = [0.3, -1.2, 2.4];
        let base = softmax(&z);
        for c in [0.5, -3.0, 100.0] {
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let s = softmax(&shifted);
            for (a, b) in base.iter().zip(&s) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let huge = softmax(&[800.0, 801.0]);
        assert!(huge.iter().all(|p| p.is_finite()));
        assert!((huge.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn permuting_assets_permutes_the_action_with_tied_head() {
        let arch = toy_arch();
        let mut params = init_params(&arch, 21).unwrap();
        let dims = arch.dims().unwrap();
        // 2 assets x 2 channels x 4 timesteps per asset block, 8 context
        // features. Tie the head so each logit reads its own asset block with
        // the same weights, plus a shared view of the context.
        let per_asset = dims.asset_flat / 2;
        assert_eq!(per_asset, 8);
        assert_eq!(dims.ctx_flat, 8);
        let v: Vec<f64> = (0..per_asset).map(|i| 0.1 + 0.05 * i as f64).collect();
        let u: Vec<f64> = (0..dims.ctx_flat).map(|i| -0.07 + 0.03 * i as f64).collect();
        {
            let head_w = params.layer_mut("head.w").unwrap();
            head_w.fill(0.0);
            let in_dim = 2 * per_asset + 8;
            for (i, vi) in v.iter().enumerate() {
                head_w[i] = *vi;
                head_w[in_dim + per_asset + i] = *vi;
            }
            for (i, ui) in u.iter().enumerate() {
                head_w[2 * per_asset + i] = *ui;
                head_w[in_dim + 2 * per_asset + i] = *ui;
            }
        }
        params.layer_mut("head.b").unwrap().fill(0.25);

        let obs = toy_obs(77, &arch);
        let mut returns_swapped = obs.returns.clone();
        let mut vols_swapped = obs.vols.clone();
        for t in 0..arch.window {
            returns_swapped.swap([0, t], [1, t]);
            vols_swapped.swap([0, t], [1, t]);
        }
        let swapped = Observation::new(returns_swapped, vols_swapped, obs.context.clone()).unwrap();

        let a = forward(&params, &obs).unwrap();
        let b = forward(&params, &swapped).unwrap();
        assert!((a.weights()[0] - b.weights()[1]).abs() < 1e-12);
        assert!((a.weights()[1] - b.weights()[0]).abs() < 1e-12);
    }

    #[test]
    fn forward_rejects_mismatched_observation() {
        let arch = toy_arch();
        let params = init_params(&arch, 3).unwrap();
        let wrong_n = Observation::new(
            Array2::zeros((3, 6)),
            Array2::zeros((3, 6)),
            Array2::zeros((3, 6)),
        )
        .unwrap();
        assert!(matches!(forward(&params, &wrong_n), Err(Error::Shape(_))));
        let wrong_w = Observation::new(
            Array2::zeros((2, 5)),
            Array2::zeros((2, 5)),
            Array2::zeros((3, 5)),
        )
        .unwrap();
        assert!(matches!(forward(&params, &wrong_w), Err(Error::Shape(_))));
        let wrong_p = Observation::new(
            Array2::zeros((2, 6)),
            Array2::zeros((2, 6)),
            Array2::zeros((4, 6)),
        )
        .unwrap();
        assert!(matches!(forward(&params, &wrong_p), Err(Error::Shape(_))));
    }

    #[test]
    fn adam_zero_gradient_only_advances_the_clock() {
        let arch = toy_arch();
        let mut params = init_params(&arch, 5).unwrap();
        let before = params.values().to_vec();
        let mut state = AdamState::new(params.len());
        let zero = GradientSet::zeros(params.len());
        adam_update(&mut params, &zero, &mut state).unwrap();
        assert_eq!(params.values(), &before[..]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_constant_gradient_step_size_equals_lr() {
        // With a constant gradient from the first step, bias correction makes
        // m_hat = g and v_hat = g^2 exactly, so each coordinate moves by
        // lr * g / (|g| + eps) every step.
        let arch = toy_arch();
        let mut params = init_params(&arch, 5).unwrap();
        let mut g = vec![0.0; params.len()];
        g[0] = 0.5;
        g[1] = -0.2;
        g[2] = 1.0;
        let grads = GradientSet::new(g.clone());
        let mut state = AdamState::new(params.len());
        for _ in 0..25 {
            let before = params.values().to_vec();
            adam_update(&mut params, &grads, &mut state).unwrap();
            for i in 0..3 {
                let delta = params.values()[i] - before[i];
                assert!((delta.abs() - 0.01).abs() < 1e-8, "coord {i}: delta {delta}");
                assert_eq!(delta.signum(), g[i].signum());
            }
            for i in 3..params.len() {
                assert_eq!(params.values()[i], before[i]);
            }
        }
        assert_eq!(state.step, 25);
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let arch = toy_arch();
        let mut params = init_params(&arch, 5).unwrap();
        let grads = GradientSet::zeros(params.len() + 1);
        let mut state = AdamState::new(params.len());
        assert!(adam_update(&mut params, &grads, &mut state).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn forward_always_lands_on_the_simplex(seed in 0u64..1000, obs_seed in 0u64..1000) {
            let arch = toy_arch();
            let params = init_params(&arch, seed).unwrap();
            let obs = toy_obs(obs_seed, &arch);
            let action = forward(&params, &obs).unwrap();
            let sum: f64 = action.weights().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(action.weights().iter().all(|w| *w >= 0.0 && w.is_finite()));
        }
    }
}
