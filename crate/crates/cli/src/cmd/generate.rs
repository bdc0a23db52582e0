use std::collections::BTreeMap;
use std::path::PathBuf;

use ssan::charset::Charset;
use ssan::data::{generate_dataset, save_dataset, GenSpec, GlyphFont, LengthDistribution};

use super::{parse_charset, parse_range};
use crate::Failure;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Dataset directory to create.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Text lengths as `lo-hi` (uniform) or `len:p,len:p,...`.
    #[arg(long, default_value = "1-5")]
    lengths: LengthDistribution,
    /// `alnum`, `digits` or the symbols themselves.
    #[arg(long, default_value = "alnum", value_parser = parse_charset)]
    charset: Charset,
    /// Glyph height range as fractions of the canvas height, `lo,hi`.
    #[arg(long, default_value = "0.55,0.9", value_parser = parse_range)]
    jitter: (f64, f64),
    /// Additive uniform noise amplitude.
    #[arg(long, default_value_t = 0.1)]
    noise: f32,
    /// Canvas height in pixels.
    #[arg(long, default_value_t = 32)]
    height: usize,
    /// Dark text on a light background.
    #[arg(long)]
    invert: bool,
}

pub fn run(a: Args) -> Result<(), Failure> {
    let spec = GenSpec {
        lengths: a.lengths,
        jitter: a.jitter,
        canvas_height: a.height,
        noise: a.noise,
        invert: a.invert,
        seed: a.seed,
        count: a.count,
        charset: a.charset,
    };
    let samples = generate_dataset(&spec, &GlyphFont::builtin())?;
    save_dataset(&a.out, &samples)?;
    let mut histogram = BTreeMap::new();
    for s in &samples {
        *histogram.entry(s.label.chars().count()).or_insert(0usize) += 1;
    }
    println!("samples\t{}", samples.len());
    println!("length\tcount");
    for (len, n) in histogram {
        println!("{}\t{}", len, n);
    }
    Ok(())
}
