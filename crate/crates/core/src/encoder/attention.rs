use ssan_tensor::{Float, Graph, TensorError, Var};

use super::pyramid::Resolution;
use crate::error::Result;

/// Resizes every `[N, C, h, w]` map to the common grid. Maps already on the
/// grid are returned as they are.
pub fn upsample_to_common<T: Float>(g: &mut Graph<T>, maps: &[Var], grid: Resolution) -> Result<Vec<Var>> {
    maps.iter()
        .map(|&m| {
            let s = g.shape(m);
            if s.len() == 4 && s[2] == grid.height && s[3] == grid.width {
                Ok(m)
            } else {
                Ok(g.bilinear_resize(m, grid.height, grid.width)?)
            }
        })
        .collect()
}

/// Fuses `S` same-shaped `[N, C, H, W]` maps. At every location the
/// stacked feature vector is scored by `w` (`[S, S·C]`), the scores are
/// softmaxed over scales and the maps are mixed with those weights.
/// Returns the fused `[N, C, H, W]` map and the `[N, S, H, W]` weights.
pub fn scale_attention<T: Float>(g: &mut Graph<T>, maps: &[Var], w: Var) -> Result<(Var, Var)> {
    let Some(&first) = maps.first() else {
        return Err(TensorError::Dimension("scale attention needs at least one map".into()).into());
    };
    let shape = g.shape(first).to_vec();
    if shape.len() != 4 {
        return Err(TensorError::Dimension(format!("scale attention map {:?} is not NCHW", shape)).into());
    }
    for &m in maps {
        if g.shape(m) != shape.as_slice() {
            return Err(TensorError::Dimension(format!(
                "scale attention maps disagree: {:?} vs {:?}",
                g.shape(m),
                shape
            ))
            .into());
        }
    }
    let (n, c, h, wd) = (shape[0], shape[1], shape[2], shape[3]);
    let s = maps.len();
    if g.shape(w) != [s, s * c] {
        return Err(TensorError::Dimension(format!(
            "scale attention weight {:?} does not match {} maps of {} channels",
            g.shape(w),
            s,
            c
        ))
        .into());
    }
    let stacked = if s == 1 { first } else { g.concat(maps, 1)? };
    let kernel = g.reshape(w, &[s, s * c, 1, 1])?;
    let scores = g.conv2d(stacked, kernel, 1, 0)?;
    let omega = g.softmax(scores, 1)?;
    let stacked5 = g.reshape(stacked, &[n, s, c, h, wd])?;
    let omega5 = g.reshape(omega, &[n, s, 1, h, wd])?;
    let weighted = g.mul(stacked5, omega5)?;
    let fused = g.sum_axis(weighted, 1)?;
    Ok((fused, omega))
}
