//! Character decoder: spatial attention over the fused features feeding an
//! LSTM with a two-part prediction head.

mod lexicon;
mod strategy;

use rand::RngCore;
use rand_distr::{Distribution, Uniform};
use ssan_tensor::{lstm_step, Float, Graph, LstmParams, Tensor, TensorError, Var};

pub use lexicon::{lexicon_decode, Lexicon};
pub use strategy::{DecodeStrategy, Decoded, GreedyStrategy, LexiconStrategy, StrategyRegistry};

use crate::encoder::backbone::he_kernel;
use crate::encoder::Resolution;
use crate::error::{Error, Result};
use crate::params::{Bindings, ParamStore};

pub const SPATIAL_KERNEL: usize = 7;

pub const SPATIAL_CONV_KEY: &str = "decoder.spatial_conv";
pub const M_KEY: &str = "decoder.m";
pub const U_KEY: &str = "decoder.u";
pub const V_KEY: &str = "decoder.v";
pub const W_KEY: &str = "decoder.w";
pub const LSTM_INPUT_KEY: &str = "decoder.lstm.w_input";
pub const LSTM_HIDDEN_KEY: &str = "decoder.lstm.w_hidden";
pub const W_Z_KEY: &str = "decoder.w_z";
pub const W_Y_KEY: &str = "decoder.w_y";

/// Decoder extents. At full width: hidden 256, attention 256, 32 spatial
/// channels, 512 feature channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecoderDims {
    pub hidden: usize,
    pub attention: usize,
    pub spatial_channels: usize,
    pub feature_channels: usize,
    pub classes: usize,
}

impl DecoderDims {
    pub fn new(width_div: usize, feature_channels: usize, classes: usize) -> Self {
        Self {
            hidden: (256 / width_div).max(1),
            attention: (256 / width_div).max(1),
            spatial_channels: (32 / width_div).max(1),
            feature_channels,
            classes,
        }
    }

    pub fn eos(&self) -> usize {
        self.classes - 1
    }
}

fn uniform_matrix<T: Float>(rows: usize, cols: usize, rng: &mut dyn RngCore) -> Tensor<T> {
    let bound = 1.0 / (cols as f64).sqrt();
    let u = Uniform::new_inclusive(-bound, bound);
    Tensor::from_fn(vec![rows, cols], |_| T::of(u.sample(rng)))
}

pub fn init_decoder<T: Float>(store: &mut ParamStore<T>, dims: &DecoderDims, rng: &mut dyn RngCore) {
    let (hd, a, cs, cf, k) = (dims.hidden, dims.attention, dims.spatial_channels, dims.feature_channels, dims.classes);
    store.insert_param(SPATIAL_CONV_KEY, he_kernel([cs, 1, SPATIAL_KERNEL, SPATIAL_KERNEL], rng));
    store.insert_param(M_KEY, uniform_matrix(a, hd, rng));
    store.insert_param(U_KEY, uniform_matrix(a, cs, rng));
    store.insert_param(V_KEY, uniform_matrix(a, cf, rng));
    store.insert_param(W_KEY, uniform_matrix(1, a, rng));
    store.insert_param(LSTM_INPUT_KEY, uniform_matrix(4 * hd, k + cf, rng));
    store.insert_param(LSTM_HIDDEN_KEY, uniform_matrix(4 * hd, hd, rng));
    store.insert_param(W_Z_KEY, uniform_matrix(hd, cf, rng));
    store.insert_param(W_Y_KEY, uniform_matrix(k, 2 * hd, rng));
}

/// Graph handles of the decoder weights. `u`, `v` and `w` are viewed as
/// 1×1 kernels so they apply per location.
#[derive(Clone, Copy, Debug)]
pub struct DecoderVars {
    pub spatial_conv: Var,
    pub m: Var,
    pub u: Var,
    pub v: Var,
    pub w: Var,
    pub lstm: LstmParams,
    pub w_z: Var,
    pub w_y: Var,
    pub dims: DecoderDims,
}

impl DecoderVars {
    pub fn bind<T: Float>(g: &mut Graph<T>, vars: &Bindings, dims: DecoderDims) -> Result<Self> {
        let pointwise = |g: &mut Graph<T>, key: &str| -> Result<Var> {
            let v = vars.get(key)?;
            let s = g.shape(v).to_vec();
            Ok(g.reshape(v, &[s[0], s[1], 1, 1])?)
        };
        Ok(Self {
            spatial_conv: vars.get(SPATIAL_CONV_KEY)?,
            m: vars.get(M_KEY)?,
            u: pointwise(g, U_KEY)?,
            v: pointwise(g, V_KEY)?,
            w: pointwise(g, W_KEY)?,
            lstm: LstmParams { w_input: vars.get(LSTM_INPUT_KEY)?, w_hidden: vars.get(LSTM_HIDDEN_KEY)? },
            w_z: vars.get(W_Z_KEY)?,
            w_y: vars.get(W_Y_KEY)?,
            dims,
        })
    }
}

/// Recurrent state for a batch of `B` sequences.
#[derive(Clone, Copy, Debug)]
pub struct DecodeState {
    /// `[B, hidden]`
    pub h: Var,
    /// `[B, hidden]`
    pub c: Var,
    /// `[B, classes]` one-hot of the previous symbol; zero before the first.
    pub o_prev: Var,
    /// `[B, H', W']`; zero before the first step.
    pub alpha_prev: Var,
}

impl DecodeState {
    pub fn initial<T: Float>(g: &mut Graph<T>, batch: usize, dims: &DecoderDims, grid: Resolution) -> Self {
        Self {
            h: g.constant(Tensor::zeros(vec![batch, dims.hidden])),
            c: g.constant(Tensor::zeros(vec![batch, dims.hidden])),
            o_prev: g.constant(Tensor::zeros(vec![batch, dims.classes])),
            alpha_prev: g.constant(Tensor::zeros(vec![batch, grid.height, grid.width])),
        }
    }
}

/// Features prepared once per batch.
#[derive(Clone, Copy, Debug)]
pub struct AttentionContext {
    /// `[B, C', H', W']`
    pub features: Var,
    /// `V·F` per location, `[B, attention, H', W']`.
    pub projected: Var,
}

impl AttentionContext {
    pub fn new<T: Float>(g: &mut Graph<T>, vars: &DecoderVars, features: Var) -> Result<Self> {
        let projected = g.conv2d(features, vars.v, 1, 0)?;
        Ok(Self { features, projected })
    }

    pub fn batch<T: Float>(&self, g: &Graph<T>) -> usize {
        g.shape(self.features)[0]
    }

    pub fn grid<T: Float>(&self, g: &Graph<T>) -> Resolution {
        let s = g.shape(self.features);
        Resolution::new(s[3], s[2])
    }
}

/// Extent-preserving 7×7 convolution of the previous `[B, H', W']` map
/// into `[B, spatial_channels, H', W']`.
pub fn encode_prev_attention<T: Float>(g: &mut Graph<T>, kernel: Var, alpha_prev: Var) -> Result<Var> {
    let s = g.shape(alpha_prev).to_vec();
    if s.len() != 3 {
        return Err(TensorError::Dimension(format!("attention map {:?} is not [B, H, W]", s)).into());
    }
    let x = g.reshape(alpha_prev, &[s[0], 1, s[1], s[2]])?;
    Ok(g.conv2d(x, kernel, 1, SPATIAL_KERNEL / 2)?)
}

/// `r(i,j) = wᵀ tanh(M h + U A(i,j) + V F(i,j))` as `[B, H', W']`, given
/// the precomputed `V F` of `ctx`.
pub fn relevancy_scores<T: Float>(
    g: &mut Graph<T>,
    vars: &DecoderVars,
    h_prev: Var,
    a_prev: Var,
    ctx: &AttentionContext,
) -> Result<Var> {
    let from_a = g.conv2d(a_prev, vars.u, 1, 0)?;
    let from_h = g.linear(h_prev, vars.m)?;
    let b = g.shape(from_h)[0];
    let from_h = g.reshape(from_h, &[b, vars.dims.attention, 1, 1])?;
    let sum = g.add(from_a, ctx.projected)?;
    let sum = g.add(sum, from_h)?;
    let act = g.tanh(sum);
    let r = g.conv2d(act, vars.w, 1, 0)?;
    let s = g.shape(r).to_vec();
    Ok(g.reshape(r, &[s[0], s[2], s[3]])?)
}

/// Softmax over all locations of each `[H', W']` map.
pub fn spatial_attention<T: Float>(g: &mut Graph<T>, r: Var) -> Result<Var> {
    let s = g.shape(r).to_vec();
    if s.len() != 3 {
        return Err(TensorError::Dimension(format!("score map {:?} is not [B, H, W]", s)).into());
    }
    let flat = g.reshape(r, &[s[0], s[1] * s[2]])?;
    let alpha = g.softmax(flat, 1)?;
    Ok(g.reshape(alpha, &s)?)
}

/// `z = Σ α(i,j) F(i,j)`: `[B, H', W']` × `[B, C', H', W']` → `[B, C']`.
pub fn context_vector<T: Float>(g: &mut Graph<T>, alpha: Var, features: Var) -> Result<Var> {
    let a = g.shape(alpha).to_vec();
    let f = g.shape(features).to_vec();
    if a.len() != 3 || f.len() != 4 || a[0] != f[0] || a[1..] != f[2..] {
        return Err(TensorError::Dimension(format!(
            "attention {:?} does not cover features {:?}",
            a, f
        ))
        .into());
    }
    let a4 = g.reshape(alpha, &[a[0], 1, a[1], a[2]])?;
    let weighted = g.mul(features, a4)?;
    let flat = g.reshape(weighted, &[f[0], f[1], f[2] * f[3]])?;
    Ok(g.sum_axis(flat, 2)?)
}

#[derive(Clone, Copy, Debug)]
pub struct StepOutput {
    /// `[B, classes]`
    pub log_probs: Var,
    pub h: Var,
    pub c: Var,
    /// `[B, H', W']`
    pub alpha: Var,
    /// `[B, C']`
    pub context: Var,
}

/// One decoding step: previous-attention encoding, relevancy, attention,
/// context, LSTM and the prediction head, in that order.
pub fn decode_step<T: Float>(
    g: &mut Graph<T>,
    vars: &DecoderVars,
    ctx: &AttentionContext,
    state: &DecodeState,
) -> Result<StepOutput> {
    let a_prev = encode_prev_attention(g, vars.spatial_conv, state.alpha_prev)?;
    let r = relevancy_scores(g, vars, state.h, a_prev, ctx)?;
    let alpha = spatial_attention(g, r)?;
    let z = context_vector(g, alpha, ctx.features)?;
    let x = g.concat(&[state.o_prev, z], 1)?;
    let (h, c) = lstm_step(g, x, state.h, state.c, &vars.lstm)?;
    let zt = g.linear(z, vars.w_z)?;
    let zt = g.tanh(zt);
    let joint = g.concat(&[h, zt], 1)?;
    let logits = g.linear(joint, vars.w_y)?;
    let log_probs = g.log_softmax(logits, 1)?;
    Ok(StepOutput { log_probs, h, c, alpha, context: z })
}

/// Row-major `[rows, classes]` indicator with a 1 at each `Some` column.
pub fn one_hot<T: Float>(targets: &[Option<usize>], classes: usize) -> Tensor<T> {
    let mut t = Tensor::zeros(vec![targets.len(), classes]);
    for (row, target) in targets.iter().enumerate() {
        if let Some(k) = target {
            t.data_mut()[row * classes + k] = T::one();
        }
    }
    t
}

pub struct TeacherForced {
    /// Summed negative log-likelihood of every sequence (label plus eos).
    pub total_nll: Var,
    pub steps: Vec<StepOutput>,
}

/// Runs the decoder with ground-truth previous symbols. `labels[b]` holds
/// symbol indices without eos; eos is scored after the last symbol.
pub fn teacher_forced<T: Float>(
    g: &mut Graph<T>,
    vars: &DecoderVars,
    ctx: &AttentionContext,
    labels: &[Vec<usize>],
) -> Result<TeacherForced> {
    let dims = vars.dims;
    let batch = ctx.batch(g);
    if labels.len() != batch {
        return Err(Error::input(format!("{} labels for a batch of {}", labels.len(), batch)));
    }
    if let Some(bad) = labels.iter().flatten().find(|&&k| k >= dims.eos()) {
        return Err(Error::input(format!("label symbol {} is outside the charset", bad)));
    }
    let grid = ctx.grid(g);
    let mut state = DecodeState::initial(g, batch, &dims, grid);
    let longest = labels.iter().map(Vec::len).max().unwrap_or(0);
    let mut terms = Vec::with_capacity(longest + 1);
    let mut steps = Vec::with_capacity(longest + 1);
    for t in 0..=longest {
        let out = decode_step(g, vars, ctx, &state)?;
        let targets: Vec<Option<usize>> = labels
            .iter()
            .map(|l| match t.cmp(&l.len()) {
                std::cmp::Ordering::Less => Some(l[t]),
                std::cmp::Ordering::Equal => Some(dims.eos()),
                std::cmp::Ordering::Greater => None,
            })
            .collect();
        let mask = g.constant(one_hot(&targets, dims.classes));
        let picked = g.mul(out.log_probs, mask)?;
        terms.push(g.sum(picked));
        let fed: Vec<Option<usize>> = labels.iter().map(|l| l.get(t).copied()).collect();
        state = DecodeState {
            h: out.h,
            c: out.c,
            o_prev: g.constant(one_hot(&fed, dims.classes)),
            alpha_prev: out.alpha,
        };
        steps.push(out);
    }
    let mut total = terms[0];
    for &term in &terms[1..] {
        total = g.add(total, term)?;
    }
    Ok(TeacherForced { total_nll: g.scale(total, -T::one()), steps })
}
