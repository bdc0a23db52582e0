use rand_distr::{Distribution, Uniform};
use ssan_tensor::{Float, Graph, Tensor, Var};

use super::attention::{scale_attention, upsample_to_common};
use super::backbone::{init_backbone, init_running_stats, BackboneLayout};
use super::pyramid::{PyramidSpec, Resolution};
use super::Encoder;
use crate::error::Result;
use crate::params::{Bindings, ParamStore};

pub const SCALE_ATTENTION_KEY: &str = "scale_attention.w";

/// Shared backbone over an image pyramid fused by scale attention.
#[derive(Clone, Debug)]
pub struct SafeEncoder {
    spec: PyramidSpec,
}

impl SafeEncoder {
    pub fn new(spec: PyramidSpec) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &PyramidSpec {
        &self.spec
    }
}

impl<T: Float> Encoder<T> for SafeEncoder {
    fn variant(&self) -> String {
        let levels: Vec<String> = self.spec.scales().iter().map(|r| r.to_string()).collect();
        format!("safe:{}", levels.join(","))
    }

    fn levels(&self) -> &[Resolution] {
        self.spec.scales()
    }

    fn grid(&self) -> Resolution {
        self.spec.common_grid()
    }

    fn init(&self, store: &mut ParamStore<T>, layout: &BackboneLayout, rng: &mut dyn rand::RngCore) {
        init_backbone(store, layout, rng);
        for &level in self.spec.scales() {
            init_running_stats(store, layout, level);
        }
        let s = self.spec.len();
        let fan = s * layout.out_channels();
        let bound = 1.0 / (fan as f64).sqrt();
        let uniform = Uniform::new_inclusive(-bound, bound);
        let w = Tensor::from_fn(vec![s, fan], |_| T::of(uniform.sample(rng)));
        store.insert_param(SCALE_ATTENTION_KEY, w);
    }

    fn fuse(&self, g: &mut Graph<T>, vars: &Bindings, level_maps: &[Var]) -> Result<(Var, Option<Var>)> {
        let common = upsample_to_common(g, level_maps, self.spec.common_grid())?;
        let (features, omega) = scale_attention(g, &common, vars.get(SCALE_ATTENTION_KEY)?)?;
        Ok((features, Some(omega)))
    }
}
