use std::fmt;
use std::str::FromStr;

use ssan_tensor::{Float, Tensor};

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Width × height extent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Resolution {
    pub width: usize,
    pub height: usize,
}

impl Resolution {
    pub const fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    /// Extent after the backbone's two 2×2 poolings.
    pub fn feature_extent(self) -> Resolution {
        Resolution::new(self.width / 4, self.height / 4)
    }

    pub fn divisible_by_four(self) -> bool {
        self.width.is_multiple_of(4) && self.height.is_multiple_of(4) && self.width > 0 && self.height > 0
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl FromStr for Resolution {
    type Err = Error;

    /// `WxH`, or a bare width with the default height of 32.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::input(format!("bad resolution {:?}", s)))
        };
        match s.split_once(['x', 'X']) {
            Some((w, h)) => Ok(Resolution::new(parse(w)?, parse(h)?)),
            None => Ok(Resolution::new(parse(s)?, 32)),
        }
    }
}

/// The reference level whose feature extent becomes the fused grid.
pub const REFERENCE_LEVEL: Resolution = Resolution::new(96, 32);

pub const DEFAULT_LEVELS: [Resolution; 4] = [
    Resolution::new(192, 32),
    Resolution::new(96, 32),
    Resolution::new(48, 32),
    Resolution::new(24, 32),
];

/// Input resolutions of the image pyramid plus the common feature grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PyramidSpec {
    scales: Vec<Resolution>,
    common_grid: Resolution,
}

impl Default for PyramidSpec {
    fn default() -> Self {
        Self::new(DEFAULT_LEVELS.to_vec()).expect("default pyramid is valid")
    }
}

impl PyramidSpec {
    /// Levels are ordered finest first. The common grid is the feature
    /// extent of the level closest in width to 96×32 (ties go to the wider).
    pub fn new(mut scales: Vec<Resolution>) -> Result<Self> {
        if scales.is_empty() {
            return Err(Error::input("pyramid needs at least one scale"));
        }
        for s in &scales {
            if !s.divisible_by_four() {
                return Err(Error::input(format!("pyramid level {} is not divisible by 4", s)));
            }
        }
        scales.sort_by(|a, b| b.width.cmp(&a.width).then(b.height.cmp(&a.height)));
        scales.dedup();
        let anchor = scales
            .iter()
            .min_by_key(|s| (s.width.abs_diff(REFERENCE_LEVEL.width), usize::MAX - s.width))
            .copied()
            .expect("nonempty");
        Ok(Self { common_grid: anchor.feature_extent(), scales })
    }

    pub fn with_grid(scales: Vec<Resolution>, common_grid: Resolution) -> Result<Self> {
        let mut spec = Self::new(scales)?;
        if !spec.scales.iter().any(|s| s.feature_extent() == common_grid) {
            return Err(Error::input(format!(
                "common grid {} is not the feature extent of any pyramid level",
                common_grid
            )));
        }
        spec.common_grid = common_grid;
        Ok(spec)
    }

    pub fn scales(&self) -> &[Resolution] {
        &self.scales
    }

    pub fn common_grid(&self) -> Resolution {
        self.common_grid
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }
}

/// Resizes `image` to every pyramid level (values in `[0, 1]`, before
/// normalization).
pub fn build_pyramid(image: &GrayImage, spec: &PyramidSpec) -> Vec<GrayImage> {
    spec.scales().iter().map(|r| image.resize(r.width, r.height)).collect()
}

/// Maps a pixel in `[0, 1]` to `[-1, 1]`.
pub fn normalize_pixel<T: Float>(v: f32) -> T {
    T::of((v as f64 - 0.5) / 0.5)
}

/// Stacks same-sized levels into a normalized `[N, 1, H, W]` tensor.
pub fn level_tensor<T: Float>(levels: &[&[T]], res: Resolution) -> Tensor<T> {
    let mut data = Vec::with_capacity(levels.len() * res.width * res.height);
    for l in levels {
        assert_eq!(l.len(), res.width * res.height, "level size mismatch");
        data.extend_from_slice(l);
    }
    Tensor::new(vec![levels.len(), 1, res.height, res.width], data).expect("sizes checked")
}
