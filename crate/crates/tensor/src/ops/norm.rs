use crate::error::{dim_err, Result, TensorError};
use crate::scalar::{c, Float};

pub const BN_EPSILON: f64 = 1e-5;

/// Per-channel statistics of one training-mode pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Unbiased variance, suitable for running estimates.
    pub var: Vec<T>,
}

pub(crate) struct BnForward<T> {
    pub out: Vec<T>,
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub stats: Option<BatchStats<T>>,
}

pub(crate) fn nchw(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() != 4 {
        return dim_err(format!("batch_norm expects NCHW input, got {:?}", shape));
    }
    Ok((shape[0], shape[1], shape[2] * shape[3]))
}

pub(crate) fn batch_norm_forward<T: Float>(
    x: &[T],
    shape: &[usize],
    gamma: &[T],
    beta: &[T],
    running: Option<(&[T], &[T])>,
) -> Result<BnForward<T>> {
    let (n, ch, hw) = nchw(shape)?;
    if gamma.len() != ch || beta.len() != ch {
        return dim_err(format!(
            "batch_norm has {} channels but gamma/beta have {}/{}",
            ch,
            gamma.len(),
            beta.len()
        ));
    }
    let count = n * hw;
    let eps = c::<T>(BN_EPSILON);
    let (mean, var_biased, stats) = match running {
        Some((rm, rv)) => {
            if rm.len() != ch || rv.len() != ch {
                return dim_err("batch_norm running statistics do not match channel count");
            }
            (rm.to_vec(), rv.to_vec(), None)
        }
        None => {
            if count < 2 {
                return Err(TensorError::Statistics(format!(
                    "batch_norm needs at least 2 values per channel in train mode, got {}",
                    count
                )));
            }
            let mut mean = vec![T::zero(); ch];
            let mut var = vec![T::zero(); ch];
            for chn in 0..ch {
                let mut s = T::zero();
                for i in 0..n {
                    let base = (i * ch + chn) * hw;
                    for &v in &x[base..base + hw] {
                        s += v;
                    }
                }
                let m = s / c::<T>(count as f64);
                let mut sq = T::zero();
                for i in 0..n {
                    let base = (i * ch + chn) * hw;
                    for &v in &x[base..base + hw] {
                        sq += (v - m) * (v - m);
                    }
                }
                mean[chn] = m;
                var[chn] = sq / c::<T>(count as f64);
            }
            let unbiased = var
                .iter()
                .map(|&v| v * c::<T>(count as f64) / c::<T>((count - 1) as f64))
                .collect();
            let stats = BatchStats { mean: mean.clone(), var: unbiased };
            (mean, var, Some(stats))
        }
    };
    let inv_std: Vec<T> = var_biased.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut out = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    for i in 0..n {
        for chn in 0..ch {
            let base = (i * ch + chn) * hw;
            for p in base..base + hw {
                let xh = (x[p] - mean[chn]) * inv_std[chn];
                xhat[p] = xh;
                out[p] = gamma[chn] * xh + beta[chn];
            }
        }
    }
    Ok(BnForward { out, xhat, inv_std, stats })
}

/// Returns (dx, dgamma, dbeta).
pub(crate) fn batch_norm_backward<T: Float>(
    shape: &[usize],
    xhat: &[T],
    inv_std: &[T],
    gamma: &[T],
    g: &[T],
    train: bool,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (n, ch, hw) = nchw(shape).expect("shape validated in forward");
    let count = c::<T>((n * hw) as f64);
    let mut dgamma = vec![T::zero(); ch];
    let mut dbeta = vec![T::zero(); ch];
    for i in 0..n {
        for chn in 0..ch {
            let base = (i * ch + chn) * hw;
            for p in base..base + hw {
                dbeta[chn] += g[p];
                dgamma[chn] += g[p] * xhat[p];
            }
        }
    }
    let mut dx = vec![T::zero(); g.len()];
    for i in 0..n {
        for chn in 0..ch {
            let base = (i * ch + chn) * hw;
            let scale = gamma[chn] * inv_std[chn];
            for p in base..base + hw {
                dx[p] = if train {
                    // dxhat = g·gamma; sums of dxhat are gamma·dbeta and gamma·dgamma.
                    scale * (g[p] - dbeta[chn] / count - xhat[p] * dgamma[chn] / count)
                } else {
                    scale * g[p]
                };
            }
        }
    }
    (dx, dgamma, dbeta)
}
