use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::font::GlyphFont;
use super::render::{random_label, render_word, GenSpec, LabeledSample};
use crate::error::{Error, Result};
use crate::image::GrayImage;

pub const MANIFEST: &str = "manifest.tsv";
/// Per-character rendered widths, one line per manifest record.
pub const META: &str = "meta.tsv";
pub const IMAGE_DIR: &str = "images";

/// Random stream of sample `index`, independent of every other index.
pub fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// `spec.count` samples; sample `i` depends only on `(spec, i)`.
pub fn generate_dataset(spec: &GenSpec, font: &GlyphFont) -> Result<Vec<LabeledSample>> {
    spec.validate()?;
    if spec.count == 0 {
        return Err(Error::input("sample count must be at least 1"));
    }
    (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(spec.seed, i);
            let len = spec.lengths.sample(&mut rng);
            let label = random_label(&spec.charset, len, &mut rng);
            render_word(&label, font, spec, &mut rng)
        })
        .collect()
}

fn image_name(index: usize) -> String {
    format!("{}/{:06}.pgm", IMAGE_DIR, index)
}

/// Writes images, the manifest and the width sidecar under `dir`.
pub fn save_dataset(dir: &Path, samples: &[LabeledSample]) -> Result<()> {
    let images = dir.join(IMAGE_DIR);
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut manifest = Vec::new();
    let mut meta = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let name = image_name(i);
        s.image.save_pgm(&dir.join(&name))?;
        writeln!(manifest, "{}\t{}", name, s.label).expect("in-memory write");
        let widths: Vec<String> = s.char_widths.iter().map(|w| w.to_string()).collect();
        writeln!(meta, "{}\t{}", name, widths.join(",")).expect("in-memory write");
    }
    for (file, bytes) in [(MANIFEST, manifest), (META, meta)] {
        let path = dir.join(file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Reads a dataset directory. Widths come from the sidecar when present
/// and are empty otherwise.
pub fn load_dataset(dir: &Path) -> Result<Vec<LabeledSample>> {
    let manifest_path = dir.join(MANIFEST);
    let manifest = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let meta_path = dir.join(META);
    let widths: Option<Vec<(String, Vec<f32>)>> = match fs::read_to_string(&meta_path) {
        Ok(text) => Some(
            text.lines()
                .filter(|l| !l.is_empty())
                .enumerate()
                .map(|(n, line)| {
                    let bad = || Error::format(&meta_path, format!("line {}", n + 1));
                    let (name, list) = line.split_once('\t').ok_or_else(bad)?;
                    let ws = if list.is_empty() {
                        Vec::new()
                    } else {
                        list.split(',').map(|w| w.parse::<f32>().map_err(|_| bad())).collect::<Result<_>>()?
                    };
                    Ok((name.to_string(), ws))
                })
                .collect::<Result<_>>()?,
        ),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(Error::io(&meta_path, e)),
    };
    let records: Vec<(usize, &str)> =
        manifest.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).collect();
    if records.is_empty() {
        return Err(Error::format(&manifest_path, "no records"));
    }
    if let Some(w) = &widths {
        if w.len() != records.len() {
            return Err(Error::format(&meta_path, "record count differs from the manifest"));
        }
    }
    records
        .into_iter()
        .enumerate()
        .map(|(i, (n, line))| {
            let (name, label) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(&manifest_path, format!("line {} has no TAB", n + 1)))?;
            if label.is_empty() {
                return Err(Error::format(&manifest_path, format!("line {} has an empty label", n + 1)));
            }
            let image = GrayImage::load_pgm(&dir.join(name))?;
            let char_widths = match &widths {
                Some(w) if w[i].0 == name => w[i].1.clone(),
                Some(_) => return Err(Error::format(&meta_path, format!("record {} names another image", i + 1))),
                None => Vec::new(),
            };
            Ok(LabeledSample { image, label: label.to_lowercase(), char_widths })
        })
        .collect()
}

/// Character-scale bucket at the 96×32 reference width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScaleBucket {
    Small,
    Medium,
    Large,
}

pub const SCALE_REFERENCE_WIDTH: usize = 96;

impl ScaleBucket {
    pub const ALL: [ScaleBucket; 3] = [ScaleBucket::Small, ScaleBucket::Medium, ScaleBucket::Large];

    /// Below 8 px small, above 16 px large.
    pub fn of_width(width: f32) -> Self {
        if width < 8.0 {
            ScaleBucket::Small
        } else if width <= 16.0 {
            ScaleBucket::Medium
        } else {
            ScaleBucket::Large
        }
    }

    pub fn of(sample: &LabeledSample) -> Self {
        Self::of_width(sample.mean_char_width_at(SCALE_REFERENCE_WIDTH))
    }

    pub fn name(self) -> &'static str {
        match self {
            ScaleBucket::Small => "small",
            ScaleBucket::Medium => "medium",
            ScaleBucket::Large => "large",
        }
    }
}

/// Resize helper kept next to the generator so callers need one import.
pub fn resize_to_fixed(image: &GrayImage, width: usize, height: usize) -> GrayImage {
    image.resize(width, height)
}
