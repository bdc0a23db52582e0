//! Finite-difference checks of every differentiable operation and of a
//! micro recognizer end to end, selectable by name.

use indexmap::IndexMap;
use std::collections::HashMap;

use ssan_tensor::gradcheck::{
    check_gradients, probe_loss, probe_tensor, relative_error, CheckConfig, CheckReport,
};
use ssan_tensor::{lstm_step, Activation, BnMode, Graph, LstmParams, OpKind, Tensor, Var};

use crate::charset::Charset;
use crate::data::{render_word, sample_rng, GenSpec, GlyphFont};
use crate::decoder::{
    context_vector, decode_step, encode_prev_attention, relevancy_scores, spatial_attention, AttentionContext,
    DecodeState, DecoderDims, DecoderVars, LSTM_HIDDEN_KEY, LSTM_INPUT_KEY, M_KEY, SPATIAL_CONV_KEY, U_KEY, V_KEY,
    W_KEY, W_Y_KEY, W_Z_KEY,
};
use crate::encoder::backbone::layer_of;
use crate::encoder::{backbone_layers, scale_attention, Mode, Resolution};
use crate::error::Result;
use crate::model::{ModelConfig, Recognizer};
use crate::params::Bindings;

/// Bound on the relative error of a single operation.
pub const OP_TOLERANCE: f64 = 1e-4;
/// Bound on the relative error of a composition through batch norm.
pub const COMPOSITE_TOLERANCE: f64 = 1e-3;

/// Gradient checks the backward rule of `fault` with its sign flipped.
pub type CheckFn = fn(fault: Option<OpKind>) -> Result<CheckReport>;

#[derive(Clone, Copy)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub tolerance: f64,
    pub run: CheckFn,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub tolerance: f64,
    pub report: CheckReport,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error <= self.tolerance && self.report.checked > 0
    }
}

/// Named checks in registration order.
pub struct GradcheckSuite {
    entries: IndexMap<&'static str, SuiteEntry>,
}

impl GradcheckSuite {
    pub fn empty() -> Self {
        Self { entries: IndexMap::new() }
    }

    pub fn register(&mut self, name: &'static str, tolerance: f64, run: CheckFn) {
        self.entries.insert(name, SuiteEntry { name, tolerance, run });
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn get(&self, name: &str) -> Option<&SuiteEntry> {
        self.entries.get(name)
    }

    /// Runs the entries named in `only` (all when empty). A fault, when
    /// given, is injected into the entry with the same name only.
    pub fn run(
        &self,
        only: &[String],
        fault: Option<OpKind>,
        mut each: impl FnMut(&SuiteResult),
    ) -> Result<Vec<SuiteResult>> {
        for name in only {
            if !self.entries.contains_key(name.as_str()) {
                return Err(crate::error::Error::Input(format!("unknown gradient check {:?}", name)));
            }
        }
        let mut out = Vec::new();
        for e in self.entries.values() {
            if !only.is_empty() && !only.iter().any(|n| n == e.name) {
                continue;
            }
            let f = fault.filter(|k| k.name() == e.name);
            let result = SuiteResult { name: e.name, tolerance: e.tolerance, report: (e.run)(f)? };
            each(&result);
            out.push(result);
        }
        Ok(out)
    }
}

impl Default for GradcheckSuite {
    fn default() -> Self {
        let mut s = Self::empty();
        s.register("add", OP_TOLERANCE, check_add);
        s.register("sub", OP_TOLERANCE, check_sub);
        s.register("mul", OP_TOLERANCE, check_mul);
        s.register("scale", OP_TOLERANCE, check_scale);
        s.register("relu", OP_TOLERANCE, check_relu);
        s.register("tanh", OP_TOLERANCE, check_tanh);
        s.register("sigmoid", OP_TOLERANCE, check_sigmoid);
        s.register("softmax", OP_TOLERANCE, check_softmax);
        s.register("log_softmax", OP_TOLERANCE, check_log_softmax);
        s.register("conv2d", OP_TOLERANCE, check_conv2d);
        s.register("maxpool2x2", OP_TOLERANCE, check_maxpool);
        s.register("batch_norm", OP_TOLERANCE, check_batch_norm);
        s.register("linear", OP_TOLERANCE, check_linear);
        s.register("bilinear_resize", OP_TOLERANCE, check_resize);
        s.register("reshape", OP_TOLERANCE, check_reshape);
        s.register("transpose", OP_TOLERANCE, check_transpose);
        s.register("concat", OP_TOLERANCE, check_concat);
        s.register("slice", OP_TOLERANCE, check_slice);
        s.register("sum", OP_TOLERANCE, check_sum);
        s.register("sum_axis", OP_TOLERANCE, check_sum_axis);
        s.register("gather", OP_TOLERANCE, check_gather);
        s.register("lstm_step", OP_TOLERANCE, check_lstm);
        s.register("scale_attention", OP_TOLERANCE, check_scale_attention);
        s.register("encode_prev_attention", OP_TOLERANCE, check_prev_attention);
        s.register("relevancy_scores", OP_TOLERANCE, check_relevancy);
        s.register("spatial_attention", OP_TOLERANCE, check_spatial_attention);
        s.register("context_vector", OP_TOLERANCE, check_context);
        s.register("decode_step", OP_TOLERANCE, check_decode_step);
        s.register(MICRO_NAME, COMPOSITE_TOLERANCE, check_micro);
        s
    }
}

pub const MICRO_NAME: &str = "ssan_micro";

fn probes(shapes: &[&[usize]], seed: u64) -> Vec<Tensor<f64>> {
    shapes.iter().enumerate().map(|(i, s)| probe_tensor(s, seed.wrapping_mul(31).wrapping_add(i as u64))).collect()
}

/// Checks `Σ R ⊙ f(inputs)` for a fixed probe `R`.
fn check<F>(inputs: Vec<Tensor<f64>>, fault: Option<OpKind>, f: F) -> Result<CheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let report = check_gradients(&inputs, CheckConfig::default(), |g, v| {
        if let Some(k) = fault {
            g.inject_sign_fault(k);
        }
        let out = f(g, v).map_err(|e| match e {
            crate::Error::Tensor(t) => t,
            other => ssan_tensor::TensorError::Contract(other.to_string()),
        })?;
        probe_loss(g, out, 0xabcd)
    })?;
    Ok(report)
}

fn check_add(fault: Option<OpKind>) -> Result<CheckReport> {
    check(probes(&[&[2, 3, 4], &[3, 1]], 1), fault, |g, v| Ok(g.add(v[0], v[1])?))
}

fn check_sub(fault: Option<OpKind>) -> Result<CheckReport> {
    check(probes(&[&[2, 3, 4], &[4]], 2), fault, |g, v| Ok(g.sub(v[0], v[1])?))
}

fn check_mul(fault: Option<OpKind>) -> Result<CheckReport> {
    check(probes(&[&[2, 3, 4], &[2, 1, 4]], 3), fault, |g, v| Ok(g.mul(v[0], v[1])?))
}

fn check_scale(fault: Option<OpKind>) -> Result<CheckReport> {
    check(probes(&[&[3, 5]], 4), fault, |g, v| Ok(g.scale(v[0], -1.7)))
}

fn check_activation(kind: Activation, seed: u64, fault: Option<OpKind>) -> Result<CheckReport> {
    check(probes(&[&[4, 6]], seed), fault, move |g, v| {
        let x = g.scale(v[0], 3.0);
        Ok(g.activation(x, kind))
    })
}

fn check_relu(fault: Option<OpKind>) -> Result<CheckReport> {
    check_activation(Activation::Relu, 5, fault)
}

fn check_tanh(fault: Option<OpKind>) -> Result<CheckReport> {
    check_activation(Activation::Tanh, 6, fault)
}

fn check_sigmoid(fault: Option<OpKind>) -> Result<CheckReport> {
    check_activation(Activation::Sigmoid, 7, fault)
}

fn check_softmax(fault: Option<OpKind>) -> Result<CheckReport> {
    check(probes(&[&[3, 5, 2]], 8), fault, |g, v| Ok(g.softmax(v[0], 1)?))
}

fn check_log_softmax(fault: Option<OpKind>) -> Result<CheckReport> {
    check(probes(&[&[3, 7]], 9), fault, |g, v| Ok(g.log_softmax(v[0], 1)?))
}

fn check_conv2d(fault: Option<OpKind>) -> Result<CheckReport> {
    let a = check(probes(&[&[2, 3, 5, 6], &[4, 3, 3, 3]], 10), fault, |g, v| Ok(g.conv2d(v[0], v[1], 1, 1)?))?;
    let b = check(probes(&[&[1, 2, 7, 7], &[3, 2, 3, 3]], 11), fault, |g, v| Ok(g.conv2d(v[0], v[1], 2, 0)?))?;
    let mut r = a;
    r.merge(&b);
    Ok(r)
}

fn check_maxpool(fault: Option<OpKind>) -> Result<CheckReport> {
    check(probes(&[&[2, 2, 4, 4]], 12), fault, |g, v| Ok(g.maxpool2x2(v[0])?))
}

fn check_batch_norm(fault: Option<OpKind>) -> Result<CheckReport> {
    check(probes(&[&[2, 3, 4, 4], &[3], &[3]], 13), fault, |g, v| {
        Ok(g.batch_norm(v[0], v[1], v[2], BnMode::Train)?.0)
    })
}

fn check_linear(fault: Option<OpKind>) -> Result<CheckReport> {
    check(probes(&[&[2, 3, 5], &[4, 5]], 14), fault, |g, v| Ok(g.linear(v[0], v[1])?))
}

fn check_resize(fault: Option<OpKind>) -> Result<CheckReport> {
    let up = check(probes(&[&[1, 2, 2, 6]], 15), fault, |g, v| Ok(g.bilinear_resize(v[0], 8, 24)?))?;
    let down = check(probes(&[&[1, 1, 8, 12]], 16), fault, |g, v| Ok(g.bilinear_resize(v[0], 3, 5)?))?;
    let mut r = up;
    r.merge(&down);
    Ok(r)
}

fn check_reshape(fault: Option<OpKind>) -> Result<CheckReport> {
    check(probes(&[&[2, 6]], 17), fault, |g, v| {
        let r = g.reshape(v[0], &[3, 4])?;
        let w = g.constant(probe_tensor(&[3, 4], 99));
        Ok(g.mul(r, w)?)
    })
}

fn check_transpose(fault: Option<OpKind>) -> Result<CheckReport> {
    check(probes(&[&[3, 5]], 18), fault, |g, v| Ok(g.transpose(v[0])?))
}

fn check_concat(fault: Option<OpKind>) -> Result<CheckReport> {
    check(probes(&[&[2, 3, 2], &[2, 1, 2], &[2, 4, 2]], 19), fault, |g, v| Ok(g.concat(v, 1)?))
}

fn check_slice(fault: Option<OpKind>) -> Result<CheckReport> {
    check(probes(&[&[3, 7]], 20), fault, |g, v| Ok(g.slice(v[0], 1, 2, 4)?))
}

fn check_sum(fault: Option<OpKind>) -> Result<CheckReport> {
    check(probes(&[&[3, 4]], 21), fault, |g, v| {
        let s = g.sum(v[0]);
        Ok(g.mul(s, s)?)
    })
}

fn check_sum_axis(fault: Option<OpKind>) -> Result<CheckReport> {
    check(probes(&[&[2, 3, 4]], 22), fault, |g, v| Ok(g.sum_axis(v[0], 1)?))
}

fn check_gather(fault: Option<OpKind>) -> Result<CheckReport> {
    check(probes(&[&[3, 4]], 23), fault, |g, v| {
        let a = g.gather(v[0], 5)?;
        let b = g.gather(v[0], 11)?;
        Ok(g.mul(a, b)?)
    })
}

fn check_lstm(fault: Option<OpKind>) -> Result<CheckReport> {
    let h = 4;
    check(probes(&[&[2, 3], &[2, h], &[2, h], &[4 * h, 3], &[4 * h, h]], 24), fault, |g, v| {
        let params = LstmParams { w_input: v[3], w_hidden: v[4] };
        let (hn, cn) = lstm_step(g, v[0], v[1], v[2], &params)?;
        Ok(g.concat(&[hn, cn], 1)?)
    })
}

fn check_scale_attention(fault: Option<OpKind>) -> Result<CheckReport> {
    let (s, c) = (3, 2);
    check(probes(&[&[1, c, 2, 3], &[1, c, 2, 3], &[1, c, 2, 3], &[s, s * c]], 25), fault, |g, v| {
        let (f, omega) = scale_attention(g, &v[..3], v[3])?;
        let (nf, no) = (g.value(f).numel(), g.value(omega).numel());
        let flat_f = g.reshape(f, &[nf])?;
        let flat_o = g.reshape(omega, &[no])?;
        Ok(g.concat(&[flat_f, flat_o], 0)?)
    })
}

fn tiny_dims() -> DecoderDims {
    DecoderDims { hidden: 3, attention: 4, spatial_channels: 2, feature_channels: 3, classes: 5 }
}

fn decoder_inputs(dims: &DecoderDims, seed: u64) -> Vec<Tensor<f64>> {
    let (hd, a, cs, cf, k) = (dims.hidden, dims.attention, dims.spatial_channels, dims.feature_channels, dims.classes);
    probes(
        &[
            &[cs, 1, 7, 7],
            &[a, hd],
            &[a, cs],
            &[a, cf],
            &[1, a],
            &[4 * hd, k + cf],
            &[4 * hd, hd],
            &[hd, cf],
            &[k, 2 * hd],
        ],
        seed,
    )
}

const DECODER_KEYS: [&str; 9] =
    [SPATIAL_CONV_KEY, M_KEY, U_KEY, V_KEY, W_KEY, LSTM_INPUT_KEY, LSTM_HIDDEN_KEY, W_Z_KEY, W_Y_KEY];

fn bind_decoder(g: &mut Graph<f64>, v: &[Var], dims: DecoderDims) -> Result<DecoderVars> {
    let b = Bindings::from_pairs(DECODER_KEYS.iter().copied().zip(v.iter().copied()));
    DecoderVars::bind(g, &b, dims)
}

fn check_prev_attention(fault: Option<OpKind>) -> Result<CheckReport> {
    check(probes(&[&[1, 3, 5], &[2, 1, 7, 7]], 26), fault, |g, v| encode_prev_attention(g, v[1], v[0]))
}

fn check_relevancy(fault: Option<OpKind>) -> Result<CheckReport> {
    let dims = tiny_dims();
    let mut inputs = decoder_inputs(&dims, 27);
    let first_extra = inputs.len();
    inputs.extend(probes(&[&[1, dims.hidden], &[1, dims.spatial_channels, 2, 3], &[1, dims.feature_channels, 2, 3]], 28));
    check(inputs, fault, move |g, v| {
        let dv = bind_decoder(g, &v[..first_extra], dims)?;
        let ctx = AttentionContext::new(g, &dv, v[first_extra + 2])?;
        relevancy_scores(g, &dv, v[first_extra], v[first_extra + 1], &ctx)
    })
}

fn check_spatial_attention(fault: Option<OpKind>) -> Result<CheckReport> {
    check(probes(&[&[2, 2, 3]], 29), fault, |g, v| spatial_attention(g, v[0]))
}

fn check_context(fault: Option<OpKind>) -> Result<CheckReport> {
    check(probes(&[&[2, 2, 3], &[2, 4, 2, 3]], 30), fault, |g, v| {
        let alpha = spatial_attention(g, v[0])?;
        context_vector(g, alpha, v[1])
    })
}

fn check_decode_step(fault: Option<OpKind>) -> Result<CheckReport> {
    let dims = tiny_dims();
    let mut inputs = decoder_inputs(&dims, 31);
    let n = inputs.len();
    inputs.extend(probes(&[&[1, dims.feature_channels, 2, 3], &[1, dims.hidden], &[1, dims.hidden]], 32));
    check(inputs, fault, move |g, v| {
        let dv = bind_decoder(g, &v[..n], dims)?;
        let ctx = AttentionContext::new(g, &dv, v[n])?;
        let mut state = DecodeState::initial(g, 1, &dims, Resolution::new(3, 2));
        state.h = v[n + 1];
        state.c = v[n + 2];
        let first = decode_step(g, &dv, &ctx, &state)?;
        let mut onehot = Tensor::zeros(vec![1, dims.classes]);
        onehot.data_mut()[2] = 1.0;
        let next = DecodeState { h: first.h, c: first.c, o_prev: g.constant(onehot), alpha_prev: first.alpha };
        let second = decode_step(g, &dv, &ctx, &next)?;
        Ok(g.concat(&[first.log_probs, second.log_probs], 1)?)
    })
}

/// The smallest configuration exercising every part of the recognizer.
pub fn micro_config() -> ModelConfig {
    ModelConfig { encoder: "safe:48x32,24x32".into(), width_div: 16, charset: Charset::digits() }
}

/// Teacher-forced loss of a freshly initialized micro recognizer on two
/// rendered words, checked against every parameter coordinate.
///
/// A perturbed backbone parameter of layer `l` leaves layers below `l`
/// untouched, so each central difference reruns the network from the cached
/// input of layer `l` (or from the cached backbone maps for head
/// parameters). The evaluated function is the full loss either way.
pub fn check_micro_model(config: ModelConfig, seed: u64, fault: Option<OpKind>) -> Result<CheckReport> {
    let model = Recognizer::<f64>::new(config, seed)?;
    let font = GlyphFont::builtin();
    let spec = GenSpec { charset: model.charset().clone(), ..GenSpec::default() };
    let words = ["27", "0"];
    let mut prepared = Vec::new();
    let mut labels = Vec::new();
    for (i, w) in words.iter().enumerate() {
        let sample = render_word(w, &font, &spec, &mut sample_rng(seed, i))?;
        prepared.push(model.prepare(&sample.image));
        labels.push(model.charset().encode(w)?);
    }
    let refs: Vec<_> = prepared.iter().collect();
    let names: Vec<String> =
        model.params().iter().filter(|(_, e)| e.trainable).map(|(k, _)| k.to_string()).collect();
    let inputs: Vec<Tensor<f64>> = names.iter().map(|n| model.params().get(n).cloned()).collect::<Result<_>>()?;
    let stages: Vec<Option<usize>> = names.iter().map(|n| layer_of(n)).collect();

    let mut g = Graph::new();
    if let Some(k) = fault {
        g.inject_sign_fault(k);
    }
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let bound = Bindings::from_pairs(names.iter().cloned().zip(vars.iter().copied()));
    let (loss, _) = model.batch_loss(&mut g, &bound, &refs, &labels, Mode::Train)?;
    let grads = g.backward(loss)?;

    // Unperturbed input of every backbone layer and final map, per level.
    let mut cache = Graph::new();
    let cvars: Vec<Var> = inputs.iter().map(|t| cache.constant(t.clone())).collect();
    let cbound = Bindings::from_pairs(names.iter().cloned().zip(cvars));
    let levels = model.levels().to_vec();
    let level_inputs = model.encoder_inputs(&mut cache, &refs)?;
    let mut taps = Vec::new();
    let mut maps = Vec::new();
    for (&x, &level) in level_inputs.iter().zip(&levels) {
        let mut t = Vec::new();
        let (m, _) =
            backbone_layers(&mut cache, &cbound, model.params(), model.layout(), x, level, Mode::Train, 0, Some(&mut t))?;
        taps.push(t.iter().map(|&v| cache.value(v).clone()).collect::<Vec<_>>());
        maps.push(cache.value(m).clone());
    }

    let eval = |stage: Option<usize>, values: &[Tensor<f64>]| -> Result<(f64, u64)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
        let bound = Bindings::from_pairs(names.iter().cloned().zip(vars));
        let level_maps = match stage {
            None => maps.iter().map(|m| g.constant(m.clone())).collect(),
            Some(l) => {
                let mut out = Vec::with_capacity(levels.len());
                for (i, &level) in levels.iter().enumerate() {
                    let x = g.constant(taps[i][l].clone());
                    let layout = model.layout();
                    out.push(backbone_layers(&mut g, &bound, model.params(), layout, x, level, Mode::Train, l, None)?.0);
                }
                out
            }
        };
        let loss = model.head_loss(&mut g, &bound, &level_maps, &labels)?;
        Ok((g.value(loss).item(), g.branch_signature()))
    };

    let config = CheckConfig::default();
    let mut base_signatures: HashMap<Option<usize>, u64> = HashMap::new();
    let mut report = CheckReport::default();
    let mut work = inputs.clone();
    for (which, v) in vars.iter().enumerate() {
        let stage = stages[which];
        let base = match base_signatures.get(&stage) {
            Some(&s) => s,
            None => {
                let s = eval(stage, &inputs)?.1;
                base_signatures.insert(stage, s);
                s
            }
        };
        let analytic: Vec<f64> = match grads.get(*v) {
            Some(t) => t.data().to_vec(),
            None => vec![0.0; inputs[which].numel()],
        };
        for idx in 0..inputs[which].numel() {
            let original = work[which].data()[idx];
            work[which].data_mut()[idx] = original + config.step;
            let (plus, sig_plus) = eval(stage, &work)?;
            work[which].data_mut()[idx] = original - config.step;
            let (minus, sig_minus) = eval(stage, &work)?;
            work[which].data_mut()[idx] = original;
            if sig_plus != base || sig_minus != base {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * config.step);
            let err = relative_error(analytic[idx], numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((which, idx, analytic[idx], numeric));
            }
        }
    }
    Ok(report)
}

fn check_micro(fault: Option<OpKind>) -> Result<CheckReport> {
    check_micro_model(micro_config(), 0, fault)
}
