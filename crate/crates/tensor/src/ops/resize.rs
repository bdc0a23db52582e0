use crate::scalar::{c, Float};

/// Source taps for one output coordinate along one axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Tap {
    pub lo: usize,
    pub hi: usize,
    pub frac: f64,
}

/// Half-pixel-centre sampling: output index `i` reads input coordinate
/// `(i + 0.5)·(len_in/len_out) − 0.5`, clamped to the border.
pub(crate) fn taps(len_in: usize, len_out: usize) -> Vec<Tap> {
    let ratio = len_in as f64 / len_out as f64;
    (0..len_out)
        .map(|i| {
            let src = ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, (len_in - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(len_in - 1);
            Tap { lo, hi, frac: src - lo as f64 }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct ResizePlan {
    pub planes: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub ys: Vec<Tap>,
    pub xs: Vec<Tap>,
}

impl ResizePlan {
    pub fn new(planes: usize, in_h: usize, in_w: usize, out_h: usize, out_w: usize) -> Self {
        Self {
            planes,
            in_h,
            in_w,
            ys: taps(in_h, out_h),
            xs: taps(in_w, out_w),
        }
    }

    pub fn forward<T: Float>(&self, x: &[T]) -> Vec<T> {
        let (oh, ow) = (self.ys.len(), self.xs.len());
        let mut out = Vec::with_capacity(self.planes * oh * ow);
        for p in 0..self.planes {
            let src = &x[p * self.in_h * self.in_w..(p + 1) * self.in_h * self.in_w];
            for ty in &self.ys {
                let fy = c::<T>(ty.frac);
                let r0 = &src[ty.lo * self.in_w..(ty.lo + 1) * self.in_w];
                let r1 = &src[ty.hi * self.in_w..(ty.hi + 1) * self.in_w];
                for tx in &self.xs {
                    let fx = c::<T>(tx.frac);
                    // Lerp form keeps constants and identity resizes exact.
                    let top = r0[tx.lo] + fx * (r0[tx.hi] - r0[tx.lo]);
                    let bot = r1[tx.lo] + fx * (r1[tx.hi] - r1[tx.lo]);
                    out.push(top + fy * (bot - top));
                }
            }
        }
        out
    }

    pub fn backward<T: Float>(&self, g: &[T]) -> Vec<T> {
        let (oh, ow) = (self.ys.len(), self.xs.len());
        let plane_in = self.in_h * self.in_w;
        let mut dx = vec![T::zero(); self.planes * plane_in];
        for p in 0..self.planes {
            let dst = &mut dx[p * plane_in..(p + 1) * plane_in];
            let gp = &g[p * oh * ow..(p + 1) * oh * ow];
            for (oy, ty) in self.ys.iter().enumerate() {
                let fy = c::<T>(ty.frac);
                for (ox, tx) in self.xs.iter().enumerate() {
                    let fx = c::<T>(tx.frac);
                    let gv = gp[oy * ow + ox];
                    let top = gv * (T::one() - fy);
                    let bot = gv * fy;
                    dst[ty.lo * self.in_w + tx.lo] += top * (T::one() - fx);
                    dst[ty.lo * self.in_w + tx.hi] += top * fx;
                    dst[ty.hi * self.in_w + tx.lo] += bot * (T::one() - fx);
                    dst[ty.hi * self.in_w + tx.hi] += bot * fx;
                }
            }
        }
        dx
    }
}
