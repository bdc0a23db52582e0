use rand::RngCore;
use rand_distr::{Distribution, Normal};
use ssan_tensor::{BatchStats, BnMode, Float, Graph, Tensor, TensorError, Var};

use super::pyramid::Resolution;
use super::Mode;
use crate::error::{Error, Result};
use crate::params::{Bindings, ParamStore};

/// Layer widths at full size; a pool follows the first two layers.
pub const FULL_WIDTHS: [usize; 9] = [64, 128, 256, 256, 256, 512, 512, 512, 512];
const POOL_AFTER: [usize; 2] = [0, 1];

/// Channel plan of the shared backbone after dividing every width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BackboneLayout {
    width_div: usize,
}

impl BackboneLayout {
    pub fn new(width_div: usize) -> Result<Self> {
        if width_div == 0 || !FULL_WIDTHS[0].is_multiple_of(width_div) {
            return Err(Error::input(format!(
                "width divisor {} must divide {}",
                width_div, FULL_WIDTHS[0]
            )));
        }
        Ok(Self { width_div })
    }

    pub fn width_div(&self) -> usize {
        self.width_div
    }

    pub fn widths(&self) -> [usize; 9] {
        FULL_WIDTHS.map(|w| w / self.width_div)
    }

    pub fn out_channels(&self) -> usize {
        FULL_WIDTHS[8] / self.width_div
    }
}

/// Batch statistics of one train-mode batch-norm call, keyed by the running
/// buffers they should be folded into.
#[derive(Clone, Debug)]
pub struct BnUpdate<T> {
    pub mean_key: String,
    pub var_key: String,
    pub stats: BatchStats<T>,
}

pub fn conv_key(layer: usize) -> String {
    format!("backbone.conv{}.weight", layer)
}

pub fn gamma_key(layer: usize) -> String {
    format!("backbone.bn{}.gamma", layer)
}

pub fn beta_key(layer: usize) -> String {
    format!("backbone.bn{}.beta", layer)
}

/// Running statistics are tracked separately for every input resolution.
/// Layer index of a backbone conv, gamma or beta key.
pub fn layer_of(key: &str) -> Option<usize> {
    let rest = key.strip_prefix("backbone.")?;
    let (digits, suffix) = if let Some(r) = rest.strip_prefix("conv") {
        let end = r.find('.')?;
        (&r[..end], &r[end..])
    } else {
        let r = rest.strip_prefix("bn")?;
        let end = r.find('.')?;
        (&r[..end], &r[end..])
    };
    match suffix {
        ".weight" | ".gamma" | ".beta" => digits.parse().ok(),
        _ => None,
    }
}

pub fn running_keys(layer: usize, level: Resolution) -> (String, String) {
    (
        format!("backbone.bn{}.running_mean@{}", layer, level),
        format!("backbone.bn{}.running_var@{}", layer, level),
    )
}

/// Kernel with entries drawn from `N(0, 2 / fan_in)`.
pub fn he_kernel<T: Float>(shape: [usize; 4], rng: &mut dyn RngCore) -> Tensor<T> {
    let fan_in = shape[1] * shape[2] * shape[3];
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    Tensor::from_fn(shape.to_vec(), |_| T::of(normal.sample(rng)))
}

pub fn init_backbone<T: Float>(store: &mut ParamStore<T>, layout: &BackboneLayout, rng: &mut dyn RngCore) {
    let mut cin = 1;
    for (layer, cout) in layout.widths().into_iter().enumerate() {
        store.insert_param(conv_key(layer), he_kernel([cout, cin, 3, 3], rng));
        store.insert_param(gamma_key(layer), Tensor::full(vec![cout], T::one()));
        store.insert_param(beta_key(layer), Tensor::zeros(vec![cout]));
        cin = cout;
    }
}

/// Adds zero-mean, unit-variance running statistics for `level`.
pub fn init_running_stats<T: Float>(store: &mut ParamStore<T>, layout: &BackboneLayout, level: Resolution) {
    for (layer, c) in layout.widths().into_iter().enumerate() {
        let (mk, vk) = running_keys(layer, level);
        store.insert_buffer(mk, Tensor::zeros(vec![c]));
        store.insert_buffer(vk, Tensor::full(vec![c], T::one()));
    }
}

/// Nine conv–BN–ReLU layers with 2×2 max pooling after the first two.
/// `x` is `[N, 1, H, W]` at `level`; the result is `[N, C', H/4, W/4]`.
pub fn backbone_forward<T: Float>(
    g: &mut Graph<T>,
    vars: &Bindings,
    store: &ParamStore<T>,
    layout: &BackboneLayout,
    x: Var,
    level: Resolution,
    mode: Mode,
) -> Result<(Var, Vec<BnUpdate<T>>)> {
    if !level.divisible_by_four() {
        return Err(TensorError::Dimension(format!("backbone input {} is not divisible by 4", level)).into());
    }
    let shape = g.shape(x);
    if shape.len() != 4 || shape[1] != 1 || shape[2] != level.height || shape[3] != level.width {
        return Err(TensorError::Dimension(format!(
            "backbone input {:?} is not a single-channel {} batch",
            shape, level
        ))
        .into());
    }
    backbone_layers(g, vars, store, layout, x, level, mode, 0, None)
}

/// Runs layers `from..` on `x`, the input of layer `from`. When `taps` is
/// given, the input of every layer run is appended to it.
#[allow(clippy::too_many_arguments)]
pub fn backbone_layers<T: Float>(
    g: &mut Graph<T>,
    vars: &Bindings,
    store: &ParamStore<T>,
    layout: &BackboneLayout,
    x: Var,
    level: Resolution,
    mode: Mode,
    from: usize,
    mut taps: Option<&mut Vec<Var>>,
) -> Result<(Var, Vec<BnUpdate<T>>)> {
    let mut updates = Vec::new();
    let mut h = x;
    for layer in from..layout.widths().len() {
        if let Some(t) = taps.as_deref_mut() {
            t.push(h);
        }
        h = g.conv2d(h, vars.get(&conv_key(layer))?, 1, 1)?;
        let gamma = vars.get(&gamma_key(layer))?;
        let beta = vars.get(&beta_key(layer))?;
        let (mean_key, var_key) = running_keys(layer, level);
        h = match mode {
            Mode::Train => {
                let (y, stats) = g.batch_norm(h, gamma, beta, BnMode::Train)?;
                updates.push(BnUpdate { mean_key, var_key, stats: stats.expect("train mode") });
                y
            }
            Mode::Eval => {
                let mean = store.get(&mean_key)?.data();
                let var = store.get(&var_key)?.data();
                g.batch_norm(h, gamma, beta, BnMode::Eval { mean, var })?.0
            }
        };
        h = g.relu(h);
        if POOL_AFTER.contains(&layer) {
            h = g.maxpool2x2(h)?;
        }
    }
    Ok((h, updates))
}
