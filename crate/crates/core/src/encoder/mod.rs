//! Image encoders: the multi-scale SAFE encoder and the single-resolution
//! baseline, both selectable by a variant string through [`EncoderRegistry`].

mod attention;
pub mod backbone;
pub mod pyramid;
mod safe;
mod single;

use indexmap::IndexMap;
use rand::RngCore;
use ssan_tensor::{Float, Graph, Var};

pub use attention::{scale_attention, upsample_to_common};
pub use backbone::{backbone_forward, backbone_layers, BackboneLayout, BnUpdate};
pub use pyramid::{build_pyramid, PyramidSpec, Resolution};
pub use safe::{SafeEncoder, SCALE_ATTENTION_KEY};
pub use single::SingleScaleEncoder;

use crate::error::{Error, Result};
use crate::params::{Bindings, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub struct EncoderOutput<T> {
    /// Fused `[N, C', H', W']` features.
    pub features: Var,
    /// `[N, S, H', W']` scale weights; absent for single-scale encoders.
    pub scale_weights: Option<Var>,
    /// Backbone output per level, before resizing to the common grid.
    pub level_maps: Vec<Var>,
    pub bn_updates: Vec<BnUpdate<T>>,
}

pub trait Encoder<T: Float>: Send + Sync {
    /// Canonical variant string; parsing it yields an equal encoder.
    fn variant(&self) -> String;

    /// Input resolutions, one `[N, 1, H, W]` input per entry.
    fn levels(&self) -> &[Resolution];

    /// Spatial extent of the output features.
    fn grid(&self) -> Resolution;

    /// Inserts every tensor the encoder reads into `store`.
    fn init(&self, store: &mut ParamStore<T>, layout: &BackboneLayout, rng: &mut dyn RngCore);

    /// Combines the per-level backbone maps into `(features, scale weights)`.
    fn fuse(&self, g: &mut Graph<T>, vars: &Bindings, level_maps: &[Var]) -> Result<(Var, Option<Var>)>;

    /// Shared backbone on every level followed by [`fuse`](Self::fuse).
    fn forward(
        &self,
        g: &mut Graph<T>,
        vars: &Bindings,
        store: &ParamStore<T>,
        layout: &BackboneLayout,
        inputs: &[Var],
        mode: Mode,
    ) -> Result<EncoderOutput<T>> {
        if inputs.len() != self.levels().len() {
            return Err(Error::input(format!(
                "encoder expects {} pyramid levels, got {}",
                self.levels().len(),
                inputs.len()
            )));
        }
        let mut level_maps = Vec::with_capacity(inputs.len());
        let mut bn_updates = Vec::new();
        for (&x, &level) in inputs.iter().zip(self.levels()) {
            let (m, updates) = backbone_forward(g, vars, store, layout, x, level, mode)?;
            level_maps.push(m);
            bn_updates.extend(updates);
        }
        let (features, scale_weights) = self.fuse(g, vars, &level_maps)?;
        Ok(EncoderOutput { features, scale_weights, level_maps, bn_updates })
    }
}

pub type EncoderFactory<T> = fn(&str) -> Result<Box<dyn Encoder<T>>>;

/// Encoder constructors keyed by the prefix of a variant string
/// (`kind` or `kind:args`).
pub struct EncoderRegistry<T> {
    factories: IndexMap<&'static str, EncoderFactory<T>>,
}

impl<T: Float> Default for EncoderRegistry<T> {
    fn default() -> Self {
        let mut r = Self { factories: IndexMap::new() };
        r.register("safe", build_safe::<T>);
        r.register("1cnn", build_single::<T>);
        r
    }
}

impl<T: Float> EncoderRegistry<T> {
    pub fn register(&mut self, kind: &'static str, factory: EncoderFactory<T>) {
        self.factories.insert(kind, factory);
    }

    pub fn kinds(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn build(&self, variant: &str) -> Result<Box<dyn Encoder<T>>> {
        let (kind, args) = variant.trim().split_once(':').unwrap_or((variant.trim(), ""));
        let factory = self.factories.get(kind.to_ascii_lowercase().as_str()).ok_or_else(|| {
            let known: Vec<_> = self.kinds().collect();
            Error::input(format!("unknown encoder {:?} (known: {})", kind, known.join(", ")))
        })?;
        factory(args)
    }
}

/// `safe` alone means the default four-level pyramid.
fn build_safe<T: Float>(args: &str) -> Result<Box<dyn Encoder<T>>> {
    let spec = if args.trim().is_empty() {
        PyramidSpec::default()
    } else {
        let scales = args.split(',').map(str::parse).collect::<Result<Vec<Resolution>>>()?;
        PyramidSpec::new(scales)?
    };
    Ok(Box::new(SafeEncoder::new(spec)))
}

/// `1cnn` alone means 96×32.
fn build_single<T: Float>(args: &str) -> Result<Box<dyn Encoder<T>>> {
    let res = if args.trim().is_empty() { pyramid::REFERENCE_LEVEL } else { args.parse()? };
    Ok(Box::new(SingleScaleEncoder::new(res)?))
}
