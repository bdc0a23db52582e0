use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssan_tensor::{Float, Graph, Tensor, Var};

use crate::charset::Charset;
use crate::decoder::{
    decode_step, init_decoder, one_hot, teacher_forced, AttentionContext, DecodeState, Decoded, DecoderDims,
    DecoderVars,
};
use crate::encoder::pyramid::{level_tensor, normalize_pixel};
use crate::encoder::{BackboneLayout, BnUpdate, Encoder, EncoderRegistry, Mode, Resolution};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::params::{Bindings, ParamStore};

/// Running-statistic decay: `running ← m·running + (1 − m)·batch`.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    /// Encoder variant string, e.g. `safe:96x32,48x32` or `1cnn:96x32`.
    pub encoder: String,
    /// Every layer width is divided by this.
    pub width_div: usize,
    pub charset: Charset,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { encoder: "safe".into(), width_div: 1, charset: Charset::alphanumeric() }
    }
}

/// Encoder plus decoder with all of their tensors.
pub struct Recognizer<T: Float> {
    config: ModelConfig,
    encoder: Box<dyn Encoder<T>>,
    layout: BackboneLayout,
    dims: DecoderDims,
    params: ParamStore<T>,
}

/// An image resized to every encoder level and normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared<T> {
    levels: Vec<Vec<T>>,
}

impl<T> Prepared<T> {
    pub fn levels(&self) -> &[Vec<T>] {
        &self.levels
    }
}

/// Eval-mode encoder output for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoded<T> {
    /// `[1, C', H', W']`
    pub features: Tensor<T>,
    /// `[1, S, H', W']` for multi-scale encoders.
    pub scale_weights: Option<Tensor<T>>,
}

impl<T: Float> Recognizer<T> {
    /// Fresh model with every tensor drawn from a stream seeded by `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut model = Self::skeleton(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        model.encoder.init(&mut model.params, &model.layout, &mut rng);
        init_decoder(&mut model.params, &model.dims, &mut rng);
        Ok(model)
    }

    /// Model over existing tensors, which must match the configuration's
    /// names and shapes exactly.
    pub fn with_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        let template = Self::new(config, 0)?;
        for (name, entry) in template.params.iter() {
            let got = params.get(name)?;
            if got.shape() != entry.value.shape() {
                return Err(Error::input(format!(
                    "tensor {:?} has shape {:?}, expected {:?}",
                    name,
                    got.shape(),
                    entry.value.shape()
                )));
            }
        }
        if params.len() != template.params.len() {
            return Err(Error::input(format!(
                "expected {} model tensors, got {}",
                template.params.len(),
                params.len()
            )));
        }
        let mut params = params;
        for (name, entry) in params.iter_mut() {
            entry.trainable = template.params.iter().any(|(n, e)| n == name && e.trainable);
        }
        Ok(Self { params, ..template })
    }

    fn skeleton(mut config: ModelConfig) -> Result<Self> {
        let encoder = EncoderRegistry::<T>::default().build(&config.encoder)?;
        config.encoder = encoder.variant();
        let layout = BackboneLayout::new(config.width_div)?;
        let dims = DecoderDims::new(config.width_div, layout.out_channels(), config.charset.classes());
        Ok(Self { config, encoder, layout, dims, params: ParamStore::new() })
    }

    pub fn cast<U: Float>(&self) -> Recognizer<U> {
        let mut other = Recognizer::<U>::skeleton(self.config.clone()).expect("configuration already validated");
        other.params = self.params.cast();
        other
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn charset(&self) -> &Charset {
        &self.config.charset
    }

    pub fn encoder(&self) -> &dyn Encoder<T> {
        self.encoder.as_ref()
    }

    pub fn layout(&self) -> &BackboneLayout {
        &self.layout
    }

    pub fn dims(&self) -> &DecoderDims {
        &self.dims
    }

    pub fn levels(&self) -> &[Resolution] {
        self.encoder.levels()
    }

    pub fn grid(&self) -> Resolution {
        self.encoder.grid()
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn prepare(&self, image: &GrayImage) -> Prepared<T> {
        let levels = self
            .levels()
            .iter()
            .map(|r| image.resize(r.width, r.height).pixels().iter().map(|&p| normalize_pixel(p)).collect())
            .collect();
        Prepared { levels }
    }

    /// One `[B, 1, H, W]` constant per encoder level.
    pub fn encoder_inputs(&self, g: &mut Graph<T>, batch: &[&Prepared<T>]) -> Result<Vec<Var>> {
        let mut inputs = Vec::with_capacity(self.levels().len());
        for (i, &res) in self.levels().iter().enumerate() {
            let mut views = Vec::with_capacity(batch.len());
            for p in batch {
                let level = p
                    .levels
                    .get(i)
                    .filter(|l| l.len() == res.width * res.height)
                    .ok_or_else(|| Error::input("prepared image does not match the encoder levels"))?;
                views.push(level.as_slice());
            }
            inputs.push(g.constant(level_tensor(&views, res)));
        }
        Ok(inputs)
    }

    /// Mean teacher-forced sequence NLL over the batch. In train mode the
    /// batch-norm statistics are returned for [`apply_bn_updates`](Self::apply_bn_updates).
    pub fn batch_loss(
        &self,
        g: &mut Graph<T>,
        vars: &Bindings,
        batch: &[&Prepared<T>],
        labels: &[Vec<usize>],
        mode: Mode,
    ) -> Result<(Var, Vec<BnUpdate<T>>)> {
        if batch.is_empty() || batch.len() != labels.len() {
            return Err(Error::input(format!("batch of {} images with {} labels", batch.len(), labels.len())));
        }
        let inputs = self.encoder_inputs(g, batch)?;
        let enc = self.encoder.forward(g, vars, &self.params, &self.layout, &inputs, mode)?;
        let mean = self.decoder_loss(g, vars, enc.features, labels)?;
        Ok((mean, enc.bn_updates))
    }

    /// [`batch_loss`](Self::batch_loss) from the backbone maps onwards.
    pub fn head_loss(&self, g: &mut Graph<T>, vars: &Bindings, level_maps: &[Var], labels: &[Vec<usize>]) -> Result<Var> {
        let (features, _) = self.encoder.fuse(g, vars, level_maps)?;
        self.decoder_loss(g, vars, features, labels)
    }

    fn decoder_loss(&self, g: &mut Graph<T>, vars: &Bindings, features: Var, labels: &[Vec<usize>]) -> Result<Var> {
        let dv = DecoderVars::bind(g, vars, self.dims)?;
        let ctx = AttentionContext::new(g, &dv, features)?;
        let tf = teacher_forced(g, &dv, &ctx, labels)?;
        Ok(g.scale(tf.total_nll, T::one() / T::of(labels.len() as f64)))
    }

    /// Folds train-mode batch statistics into the running buffers.
    pub fn apply_bn_updates(&mut self, updates: &[BnUpdate<T>]) -> Result<()> {
        let m = T::of(BN_MOMENTUM);
        let keep = T::one() - m;
        for u in updates {
            for (key, batch) in [(&u.mean_key, &u.stats.mean), (&u.var_key, &u.stats.var)] {
                let running = self.params.get_mut(key)?;
                for (r, &b) in running.data_mut().iter_mut().zip(batch) {
                    *r = m * *r + keep * b;
                }
            }
        }
        Ok(())
    }

    /// Eval-mode encoding of one image.
    pub fn encode(&self, prepared: &Prepared<T>) -> Result<Encoded<T>> {
        let mut g = Graph::new();
        let vars = self.params.bind_frozen(&mut g);
        let inputs = self.encoder_inputs(&mut g, &[prepared])?;
        let enc = self.encoder.forward(&mut g, &vars, &self.params, &self.layout, &inputs, Mode::Eval)?;
        Ok(Encoded {
            features: g.value(enc.features).clone(),
            scale_weights: enc.scale_weights.map(|w| g.value(w).clone()),
        })
    }

    fn decoder_graph(&self, encoded: &Encoded<T>) -> Result<(Graph<T>, DecoderVars, AttentionContext)> {
        let mut g = Graph::new();
        let vars = self.params.bind_frozen_prefix(&mut g, "decoder.");
        let dv = DecoderVars::bind(&mut g, &vars, self.dims)?;
        let f = g.constant(encoded.features.clone());
        let ctx = AttentionContext::new(&mut g, &dv, f)?;
        Ok((g, dv, ctx))
    }

    /// Feeds back the most likely symbol until eos or `max_steps` steps.
    pub fn decode_greedy(&self, encoded: &Encoded<T>, max_steps: usize) -> Result<Decoded<T>> {
        if max_steps == 0 {
            return Err(Error::input("max_steps must be at least 1"));
        }
        let (mut g, dv, ctx) = self.decoder_graph(encoded)?;
        let grid = ctx.grid(&g);
        let mut state = DecodeState::initial(&mut g, 1, &self.dims, grid);
        let eos = self.dims.eos();
        let mut indices = Vec::new();
        let mut alphas = Vec::new();
        let mut log_prob = 0.0;
        let mut finished = false;
        for _ in 0..max_steps {
            let out = decode_step(&mut g, &dv, &ctx, &state)?;
            let lp = g.value(out.log_probs).data();
            let best = argmax(lp);
            log_prob += lp[best].as_f64();
            alphas.push(g.value(out.alpha).clone().reshape(vec![grid.height, grid.width])?);
            if best == eos {
                finished = true;
                break;
            }
            indices.push(best);
            state = DecodeState {
                h: out.h,
                c: out.c,
                o_prev: g.constant(one_hot(&[Some(best)], self.dims.classes)),
                alpha_prev: out.alpha,
            };
        }
        Ok(Decoded {
            text: self.charset().decode(&indices),
            indices,
            log_prob,
            truncated: !finished,
            alphas,
        })
    }

    /// Teacher-forced log-probability of `label` followed by eos.
    pub fn sequence_log_prob(&self, encoded: &Encoded<T>, label: &[usize]) -> Result<f64> {
        let (mut g, dv, ctx) = self.decoder_graph(encoded)?;
        let tf = teacher_forced(&mut g, &dv, &ctx, &[label.to_vec()])?;
        Ok(-g.value(tf.total_nll).item().as_f64())
    }
}

/// Index of the largest value; the first on ties.
pub fn argmax<T: Float>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
