use crate::error::{dim_err, Result};
use crate::scalar::Float;

/// 2×2 stride-2 max pooling over NCHW. Returns the pooled values and, for
/// each output cell, the flat input index that won (first maximum in
/// row-major window order).
pub(crate) fn maxpool2x2_forward<T: Float>(x: &[T], shape: &[usize]) -> Result<(Vec<T>, Vec<usize>)> {
    if shape.len() != 4 {
        return dim_err(format!("maxpool2x2 expects NCHW input, got {:?}", shape));
    }
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    if h % 2 != 0 || w % 2 != 0 {
        return dim_err(format!("maxpool2x2 needs even extents, got {}x{}", h, w));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let top = base + 2 * oy * w + 2 * ox;
                let window = [top, top + 1, top + w, top + w + 1];
                let mut best = window[0];
                for &i in &window[1..] {
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok((out, argmax))
}

pub(crate) fn maxpool2x2_backward<T: Float>(argmax: &[usize], g: &[T], input_len: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); input_len];
    for (&i, &gv) in argmax.iter().zip(g) {
        dx[i] += gv;
    }
    dx
}
