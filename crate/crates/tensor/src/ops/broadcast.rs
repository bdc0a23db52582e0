use crate::error::{dim_err, Result};

/// Numpy-style broadcast of two shapes aligned at their trailing axes.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return dim_err(format!("cannot broadcast {:?} with {:?}", a, b)),
        };
    }
    Ok(out)
}

/// Strides of `src` viewed through the broadcast output shape (0 on expanded axes).
fn expanded_strides(src: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let own = crate::tensor::strides_of(src);
    (0..rank)
        .map(|i| {
            if i + src.len() < rank {
                0
            } else {
                let j = i + src.len() - rank;
                if src[j] == 1 {
                    0
                } else {
                    own[j]
                }
            }
        })
        .collect()
}

/// Calls `f(out_index, a_index, b_index)` for every output element in row-major order.
pub(crate) fn for_each_pair(
    a: &[usize],
    b: &[usize],
    out: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let total: usize = out.iter().product();
    if a == out && b == out {
        for i in 0..total {
            f(i, i, i);
        }
        return;
    }
    if total == 0 {
        return;
    }
    let sa = expanded_strides(a, out);
    let sb = expanded_strides(b, out);
    let rank = out.len();
    let (inner, ja, jb) = (out[rank - 1], sa[rank - 1], sb[rank - 1]);
    let mut idx = vec![0usize; rank];
    let (mut ia, mut ib) = (0usize, 0usize);
    for row in (0..total).step_by(inner) {
        for k in 0..inner {
            f(row + k, ia + k * ja, ib + k * jb);
        }
        for d in (0..rank - 1).rev() {
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < out[d] {
                break;
            }
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}
