use std::path::PathBuf;

use ssan::charset::Charset;
use ssan::data::{GenSpec, GlyphFont, LengthDistribution};
use ssan::train::{run_ablation, AblationConfig, Split, TrainConfig};

use super::{emit, parse_charset};
use crate::Failure;

/// Training lengths skewed toward 4 to 8 characters, with single
/// characters rare.
const SKEWED_LENGTHS: &str = "1:0.0025,2:0.0275,3:0.05,4:0.184,5:0.184,6:0.184,7:0.184,8:0.184";

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Encoder variant to compare; repeat for each row.
    #[arg(long = "variant", default_values = ["safe:24x32,48x32,96x32", "1cnn:96x32"])]
    variants: Vec<String>,
    #[arg(long, default_value_t = 16)]
    width_div: usize,
    #[arg(long, default_value_t = 5000)]
    steps: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 4000)]
    train_count: usize,
    /// Samples in each test split.
    #[arg(long, default_value_t = 500)]
    test_count: usize,
    #[arg(long, default_value = SKEWED_LENGTHS)]
    train_lengths: LengthDistribution,
    /// Longest text of the balanced test split.
    #[arg(long, default_value_t = 8)]
    max_len: usize,
    /// Model initialization uses this seed, shuffles `seed + 1`, data
    /// `seed + 10` onward.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "digits", value_parser = parse_charset)]
    charset: Charset,
    /// Report path instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(a: Args) -> Result<(), Failure> {
    let base = GenSpec { charset: a.charset, ..GenSpec::default() };
    let split = |name: &str, lengths: ssan::Result<LengthDistribution>, seed: u64| -> ssan::Result<Split> {
        Ok(Split { name: name.into(), spec: GenSpec { lengths: lengths?, seed, count: a.test_count, ..base.clone() } })
    };
    let splits = vec![
        split("balanced", LengthDistribution::uniform(1, a.max_len), a.seed + 11)?,
        split("single", LengthDistribution::fixed(1), a.seed + 12)?,
    ];
    let config = AblationConfig {
        variants: a.variants,
        width_div: a.width_div,
        model_seed: a.seed,
        train_data: GenSpec { lengths: a.train_lengths, seed: a.seed + 10, count: a.train_count, ..base.clone() },
        splits,
        train: TrainConfig { batch_size: a.batch_size, steps: a.steps, seed: a.seed + 1, ..TrainConfig::default() },
    };
    let report = run_ablation(&config, &GlyphFont::builtin(), |m| eprintln!("{}", m))?;
    emit(&report.to_tsv(), a.out.as_deref())?;
    Ok(())
}
