use std::path::{Path, PathBuf};

use ssan::checkpoint;
use ssan::image::{write_ppm, GrayImage};
use ssan::Error;

use super::create_dir;
use crate::overlay::{blend_gray, blend_rgb, normalize, upsample};
use crate::Failure;

/// Attention of one decoding step may deviate this far from summing to 1.
const ALPHA_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Pgm,
    Ppm,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    ckpt: PathBuf,
    /// Binary PGM input.
    #[arg(long)]
    image: PathBuf,
    /// Directory for the overlays.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "ppm")]
    format: Format,
    #[arg(long, default_value_t = 32)]
    max_steps: usize,
}

pub fn run(a: Args) -> Result<(), Failure> {
    let model = checkpoint::load(&a.ckpt)?;
    let image = GrayImage::load_pgm(&a.image)?;
    create_dir(&a.out)?;
    let encoded = model.encode(&model.prepare(&image))?;
    let grid = model.grid();
    let cells = grid.height * grid.width;
    let ext = match a.format {
        Format::Pgm => "pgm",
        Format::Ppm => "ppm",
    };

    // One map per pyramid level; a single-scale encoder weighs its only
    // level by 1 everywhere.
    let omegas: Vec<Vec<f32>> = match &encoded.scale_weights {
        Some(w) => w.data().chunks(cells).map(<[f32]>::to_vec).collect(),
        None => vec![vec![1.0; cells]],
    };
    println!("kind\tindex\tfile");
    for (s, (omega, level)) in omegas.iter().zip(model.levels()).enumerate() {
        let x_s = image.resize(level.width, level.height);
        let saliency = normalize(&upsample(omega, grid.height, grid.width, level.height, level.width));
        let path = a.out.join(format!("scale_{}_{}x{}.{}", s, level.width, level.height, ext));
        write_overlay(&path, &x_s, &saliency, a.format)?;
        println!("scale\t{}\t{}", s, path.display());
    }

    let decoded = model.decode_greedy(&encoded, a.max_steps)?;
    for (t, alpha) in decoded.alphas.iter().enumerate() {
        let sum: f64 = alpha.data().iter().map(|&v| v as f64).sum();
        if (sum - 1.0).abs() > ALPHA_SUM_TOLERANCE {
            return Err(Error::Numerical { step: t, detail: format!("spatial attention sums to {}", sum) }.into());
        }
        let saliency = normalize(&upsample(alpha.data(), grid.height, grid.width, image.height(), image.width()));
        let path = a.out.join(format!("step_{:02}.{}", t, ext));
        write_overlay(&path, &image, &saliency, a.format)?;
        println!("step\t{}\t{}", t, path.display());
    }
    println!("text\t{}", decoded.text);
    Ok(())
}

fn write_overlay(path: &Path, image: &GrayImage, saliency: &[f32], format: Format) -> ssan::Result<()> {
    match format {
        Format::Pgm => GrayImage::new(image.width(), image.height(), blend_gray(image.pixels(), saliency))?.save_pgm(path),
        Format::Ppm => write_ppm(path, image.width(), image.height(), &blend_rgb(image.pixels(), saliency)),
    }
}
