use ssan_tensor::{Float, Graph, Var};

use super::backbone::{init_backbone, init_running_stats, BackboneLayout};
use super::pyramid::Resolution;
use super::Encoder;
use crate::error::{Error, Result};
use crate::params::{Bindings, ParamStore};

/// The backbone at one fixed resolution, without scale attention.
#[derive(Clone, Debug)]
pub struct SingleScaleEncoder {
    level: [Resolution; 1],
}

impl SingleScaleEncoder {
    pub fn new(resolution: Resolution) -> Result<Self> {
        if !resolution.divisible_by_four() {
            return Err(Error::input(format!("resolution {} is not divisible by 4", resolution)));
        }
        Ok(Self { level: [resolution] })
    }

    pub fn resolution(&self) -> Resolution {
        self.level[0]
    }
}

impl<T: Float> Encoder<T> for SingleScaleEncoder {
    fn variant(&self) -> String {
        format!("1cnn:{}", self.level[0])
    }

    fn levels(&self) -> &[Resolution] {
        &self.level
    }

    fn grid(&self) -> Resolution {
        self.level[0].feature_extent()
    }

    fn init(&self, store: &mut ParamStore<T>, layout: &BackboneLayout, rng: &mut dyn rand::RngCore) {
        init_backbone(store, layout, rng);
        init_running_stats(store, layout, self.level[0]);
    }

    fn fuse(&self, _g: &mut Graph<T>, _vars: &Bindings, level_maps: &[Var]) -> Result<(Var, Option<Var>)> {
        match level_maps {
            [m] => Ok((*m, None)),
            _ => Err(Error::input(format!("single-scale encoder got {} maps", level_maps.len()))),
        }
    }
}
