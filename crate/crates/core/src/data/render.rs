use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Uniform, WeightedIndex};

use super::font::{GlyphFont, GLYPH_ROWS};
use crate::charset::Charset;
use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Blank columns left and right of the text.
pub const MARGIN: usize = 2;

/// Probability of each text length.
#[derive(Clone, Debug, PartialEq)]
pub struct LengthDistribution {
    entries: Vec<(usize, f64)>,
}

impl LengthDistribution {
    /// Probabilities must be nonnegative and sum to 1 within 1e-6.
    pub fn new(entries: Vec<(usize, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::input("length distribution is empty"));
        }
        let mut total = 0.0;
        for &(len, p) in &entries {
            if len == 0 {
                return Err(Error::input("text length 0 is not allowed"));
            }
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::input(format!("length {} has invalid probability {}", len, p)));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::input(format!("length probabilities sum to {}, not 1", total)));
        }
        let mut entries = entries;
        entries.sort_by_key(|e| e.0);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::input("length listed twice"));
        }
        Ok(Self { entries })
    }

    /// Equal probability for every length in `lo..=hi`.
    pub fn uniform(lo: usize, hi: usize) -> Result<Self> {
        if lo == 0 || hi < lo {
            return Err(Error::input(format!("bad length range {}..={}", lo, hi)));
        }
        let p = 1.0 / (hi - lo + 1) as f64;
        Self::new((lo..=hi).map(|l| (l, p)).collect())
    }

    pub fn fixed(len: usize) -> Result<Self> {
        Self::new(vec![(len, 1.0)])
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn max_len(&self) -> usize {
        self.entries.iter().filter(|e| e.1 > 0.0).map(|e| e.0).max().unwrap_or(0)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let w = WeightedIndex::new(self.entries.iter().map(|e| e.1)).expect("validated weights");
        self.entries[w.sample(rng)].0
    }
}

impl FromStr for LengthDistribution {
    type Err = Error;

    /// `len:p,len:p,...`, or `lo-hi` for a uniform range.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::input(format!("bad length distribution {:?}", s));
        if let Some((lo, hi)) = s.split_once('-') {
            return Self::uniform(lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?);
        }
        let entries = s
            .split(',')
            .map(|part| {
                let (l, p) = part.split_once(':').ok_or_else(bad)?;
                Ok((l.trim().parse().map_err(|_| bad())?, p.trim().parse().map_err(|_| bad())?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }
}

impl fmt::Display for LengthDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.entries.iter().map(|(l, p)| format!("{}:{}", l, p)).collect();
        f.write_str(&parts.join(","))
    }
}

/// Parameters of the synthetic text generator.
#[derive(Clone, Debug, PartialEq)]
pub struct GenSpec {
    pub lengths: LengthDistribution,
    /// Range of glyph height as a fraction of the canvas height, drawn per
    /// character.
    pub jitter: (f64, f64),
    pub canvas_height: usize,
    /// Uniform additive noise amplitude.
    pub noise: f32,
    /// Dark text on a light background instead of light on dark.
    pub invert: bool,
    pub seed: u64,
    pub count: usize,
    pub charset: Charset,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            lengths: LengthDistribution::uniform(1, 5).expect("valid range"),
            jitter: (0.55, 0.9),
            canvas_height: 32,
            noise: 0.1,
            invert: false,
            seed: 0,
            count: 1000,
            charset: Charset::alphanumeric(),
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.jitter;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::input(format!("jitter range ({}, {}) is not inside (0, 1]", lo, hi)));
        }
        if self.canvas_height < GLYPH_ROWS {
            return Err(Error::input(format!("canvas height must be at least {}", GLYPH_ROWS)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::input("noise amplitude must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub image: GrayImage,
    pub label: String,
    /// Rendered pixel width of every character, in source pixels.
    pub char_widths: Vec<f32>,
}

impl LabeledSample {
    /// Mean character width after resizing the image to `ref_width` columns.
    pub fn mean_char_width_at(&self, ref_width: usize) -> f32 {
        if self.char_widths.is_empty() {
            return 0.0;
        }
        let mean = self.char_widths.iter().sum::<f32>() / self.char_widths.len() as f32;
        mean * ref_width as f32 / self.image.width() as f32
    }
}

struct Placed<'a> {
    glyph: &'a super::font::Glyph,
    x: usize,
    width: usize,
    height: usize,
}

/// Rasterizes `text` left to right. Each character gets its own height
/// drawn from the jitter range, keeps the glyph's cell aspect ratio and is
/// centred vertically.
pub fn render_word(text: &str, font: &GlyphFont, spec: &GenSpec, rng: &mut impl Rng) -> Result<LabeledSample> {
    spec.validate()?;
    if text.is_empty() {
        return Err(Error::input("cannot render empty text"));
    }
    spec.charset.encode(text)?;
    let (lo, hi) = spec.jitter;
    let canvas_h = spec.canvas_height;
    let mut placed = Vec::with_capacity(text.len());
    let mut x = MARGIN;
    for ch in text.chars() {
        let glyph = font.glyph(ch).ok_or_else(|| Error::input(format!("no glyph for {:?}", ch)))?;
        let frac = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let height = ((frac * canvas_h as f64).round() as usize).clamp(GLYPH_ROWS, canvas_h);
        let cell = height as f64 / GLYPH_ROWS as f64;
        let width = ((glyph.width() as f64 * cell).round() as usize).max(glyph.width());
        let gap = (cell.round() as usize).max(1);
        placed.push(Placed { glyph, x, width, height });
        x += width + gap;
    }
    let last = placed.last().expect("nonempty");
    let canvas_w = last.x + last.width + MARGIN;
    let (ink, background) = if spec.invert { (0.0, 1.0) } else { (1.0, 0.0) };
    let mut image = GrayImage::filled(canvas_w, canvas_h, background);
    for p in &placed {
        let top = (canvas_h - p.height) / 2;
        for y in 0..p.height {
            let row = y * GLYPH_ROWS / p.height;
            for dx in 0..p.width {
                let col = dx * p.glyph.width() / p.width;
                if p.glyph.ink(col, row) {
                    image.set(p.x + dx, top + y, ink);
                }
            }
        }
    }
    if spec.noise > 0.0 {
        let noise = Uniform::new_inclusive(-spec.noise, spec.noise);
        for v in image.pixels_mut() {
            *v = (*v + noise.sample(rng)).clamp(0.0, 1.0);
        }
    }
    Ok(LabeledSample {
        image,
        label: text.to_lowercase(),
        char_widths: placed.iter().map(|p| p.width as f32).collect(),
    })
}

/// A label of the given length drawn uniformly from the charset symbols.
pub fn random_label(charset: &Charset, len: usize, rng: &mut impl Rng) -> String {
    let symbols = charset.symbols();
    (0..len).map(|_| symbols[rng.gen_range(0..symbols.len())]).collect()
}
