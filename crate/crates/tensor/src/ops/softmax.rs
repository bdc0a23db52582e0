use crate::scalar::Float;

/// (outer, axis length, inner) factorization of a shape around `axis`.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn softmax_forward<T: Float>(x: &[T], shape: &[usize], axis: usize, log: bool) -> Vec<T> {
    let (outer, len, inner) = split_axis(shape, axis);
    let mut out = vec![T::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |l: usize| o * len * inner + l * inner + i;
            let mut max = T::neg_infinity();
            for l in 0..len {
                max = max.max(x[at(l)]);
            }
            let mut sum = T::zero();
            for l in 0..len {
                let e = (x[at(l)] - max).exp();
                out[at(l)] = e;
                sum += e;
            }
            if log {
                let lse = sum.ln();
                for l in 0..len {
                    out[at(l)] = x[at(l)] - max - lse;
                }
            } else {
                for l in 0..len {
                    out[at(l)] /= sum;
                }
            }
        }
    }
    out
}

/// Input gradient of softmax (`log == false`) or log-softmax given the forward output `y`.
pub(crate) fn softmax_backward<T: Float>(
    y: &[T],
    g: &[T],
    shape: &[usize],
    axis: usize,
    log: bool,
) -> Vec<T> {
    let (outer, len, inner) = split_axis(shape, axis);
    let mut dx = vec![T::zero(); y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |l: usize| o * len * inner + l * inner + i;
            if log {
                let gsum: T = (0..len).map(|l| g[at(l)]).sum();
                for l in 0..len {
                    dx[at(l)] = g[at(l)] - y[at(l)].exp() * gsum;
                }
            } else {
                let dot: T = (0..len).map(|l| g[at(l)] * y[at(l)]).sum();
                for l in 0..len {
                    dx[at(l)] = y[at(l)] * (g[at(l)] - dot);
                }
            }
        }
    }
    dx
}
