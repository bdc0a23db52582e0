use rayon::prelude::*;

use crate::error::{dim_err, Result};
use crate::scalar::Float;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn new(x: &[usize], kernel: &[usize], stride: usize, pad: usize) -> Result<Self> {
        if x.len() != 4 || kernel.len() != 4 {
            return dim_err(format!(
                "conv2d expects NCHW input and KCHW kernel, got {:?} and {:?}",
                x, kernel
            ));
        }
        if stride == 0 {
            return dim_err("conv2d stride must be at least 1");
        }
        let (n, c, h, w) = (x[0], x[1], x[2], x[3]);
        let (k, kc, kh, kw) = (kernel[0], kernel[1], kernel[2], kernel[3]);
        if kc != c {
            return dim_err(format!("conv2d kernel expects {} channels, input has {}", kc, c));
        }
        let out_extent = |len: usize, klen: usize| -> Result<usize> {
            let padded = len + 2 * pad;
            if padded < klen || !(padded - klen).is_multiple_of(stride) {
                return dim_err(format!(
                    "conv2d extent {} with kernel {}, pad {}, stride {} is not integral",
                    len, klen, pad, stride
                ));
            }
            Ok((padded - klen) / stride + 1)
        };
        let oh = out_extent(h, kh)?;
        let ow = out_extent(w, kw)?;
        Ok(Self { n, c, h, w, k, kh, kw, stride, pad, oh, ow })
    }

    fn col_rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.oh * self.ow
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    fn im2col<T: Float>(&self, x: &[T]) -> Vec<T> {
        let mut cols = Vec::with_capacity(self.col_rows() * self.out_plane());
        for c in 0..self.c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    // Output columns whose tap lands inside the row: [lo, hi).
                    let lo = self.pad.saturating_sub(kj).div_ceil(self.stride).min(self.ow);
                    let hi = (self.w + self.pad).saturating_sub(kj).div_ceil(self.stride).clamp(lo, self.ow);
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy as usize >= self.h {
                            cols.resize(cols.len() + self.ow, T::zero());
                            continue;
                        }
                        let src = &x[(c * self.h + iy as usize) * self.w..][..self.w];
                        cols.resize(cols.len() + lo, T::zero());
                        if self.stride == 1 && hi > lo {
                            cols.extend_from_slice(&src[lo + kj - self.pad..hi + kj - self.pad]);
                        } else {
                            cols.extend((lo..hi).map(|ox| src[ox * self.stride + kj - self.pad]));
                        }
                        cols.resize(cols.len() + self.ow - hi, T::zero());
                    }
                }
            }
        }
        cols
    }

    fn col2im<T: Float>(&self, cols: &[T], dx: &mut [T]) {
        let plane = self.out_plane();
        for c in 0..self.c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let src = &cols[row * plane..(row + 1) * plane];
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy as usize >= self.h {
                            continue;
                        }
                        let dst = &mut dx[(c * self.h + iy as usize) * self.w..][..self.w];
                        for ox in 0..self.ow {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            if ix >= 0 && (ix as usize) < self.w {
                                dst[ix as usize] += src[oy * self.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Float>(geo: &ConvGeom, x: &[T], w: &[T]) -> Vec<T> {
    let in_sample = geo.c * geo.h * geo.w;
    let out_sample = geo.k * geo.out_plane();
    let mut out = vec![T::zero(); geo.n * out_sample];
    out.par_chunks_mut(out_sample.max(1))
        .enumerate()
        .for_each(|(n, out_n)| {
            let x_n = &x[n * in_sample..(n + 1) * in_sample];
            let owned;
            let cols: &[T] = if geo.is_pointwise() {
                x_n
            } else {
                owned = geo.im2col(x_n);
                &owned
            };
            let (m, kk, nn) = (geo.k, geo.col_rows(), geo.out_plane());
            T::gemm(m, kk, nn, T::one(), w, kk, 1, cols, nn, 1, T::zero(), out_n, nn, 1);
        });
    out
}

/// Returns (dx, dw); each is computed only when requested. The kernel
/// gradient is reduced over samples in ascending order regardless of how
/// the per-sample work is scheduled.
pub(crate) fn conv2d_backward<T: Float>(
    geo: &ConvGeom,
    x: &[T],
    w: &[T],
    g: &[T],
    want_dx: bool,
    want_dw: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let in_sample = geo.c * geo.h * geo.w;
    let out_sample = geo.k * geo.out_plane();
    let (m, kk, nn) = (geo.k, geo.col_rows(), geo.out_plane());

    let dx = want_dx.then(|| {
        let mut dx = vec![T::zero(); geo.n * in_sample];
        dx.par_chunks_mut(in_sample.max(1))
            .enumerate()
            .for_each(|(n, dx_n)| {
                let g_n = &g[n * out_sample..(n + 1) * out_sample];
                if geo.is_pointwise() {
                    T::gemm(kk, m, nn, T::one(), w, 1, kk, g_n, nn, 1, T::zero(), dx_n, nn, 1);
                } else {
                    let mut dcols = vec![T::zero(); kk * nn];
                    T::gemm(kk, m, nn, T::one(), w, 1, kk, g_n, nn, 1, T::zero(), &mut dcols, nn, 1);
                    geo.col2im(&dcols, dx_n);
                }
            });
        dx
    });

    let dw = want_dw.then(|| {
        let partials: Vec<Vec<T>> = (0..geo.n)
            .into_par_iter()
            .map(|n| {
                let x_n = &x[n * in_sample..(n + 1) * in_sample];
                let g_n = &g[n * out_sample..(n + 1) * out_sample];
                let owned;
                let cols: &[T] = if geo.is_pointwise() {
                    x_n
                } else {
                    owned = geo.im2col(x_n);
                    &owned
                };
                let mut dw_n = vec![T::zero(); m * kk];
                T::gemm(m, nn, kk, T::one(), g_n, nn, 1, cols, 1, nn, T::zero(), &mut dw_n, kk, 1);
                dw_n
            })
            .collect();
        let mut dw = vec![T::zero(); m * kk];
        for p in &partials {
            for (a, &b) in dw.iter_mut().zip(p) {
                *a += b;
            }
        }
        dw
    });

    (dx, dw)
}
