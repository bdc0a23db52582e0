use std::fmt::Write;
use std::path::PathBuf;

use ssan::charset::Charset;
use ssan::checkpoint;
use ssan::data::load_dataset;
use ssan::train::{train, TrainConfig};
use ssan::{ModelConfig, Recognizer};

use super::{create_dir, emit, parse_charset};
use crate::Failure;

pub const LOSS_FILE: &str = "loss.tsv";

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Directory for checkpoints and the loss curve; the curve goes to
    /// standard output without it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `safe[:WxH,...]` or `1cnn[:WxH]`.
    #[arg(long, default_value = "safe")]
    encoder: String,
    /// Divides every layer width.
    #[arg(long, default_value_t = 16)]
    width_div: usize,
    #[arg(long, default_value = "alnum", value_parser = parse_charset)]
    charset: Charset,
    #[arg(long, default_value_t = 5000)]
    steps: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    /// Seeds initialization and the epoch shuffles.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Train on the first sample alone with batch size 1.
    #[arg(long)]
    overfit1: bool,
    /// Start from these weights; the model configuration is taken from the
    /// checkpoint.
    #[arg(long, value_name = "CKPT")]
    resume: Option<PathBuf>,
}

pub fn run(a: Args) -> Result<(), Failure> {
    let mut samples = load_dataset(&a.data)?;
    let mut batch_size = a.batch_size;
    if a.overfit1 {
        samples.truncate(1);
        batch_size = 1;
    }
    let mut model = match &a.resume {
        Some(path) => checkpoint::load(path)?,
        None => Recognizer::<f32>::new(
            ModelConfig { encoder: a.encoder, width_div: a.width_div, charset: a.charset },
            a.seed,
        )?,
    };
    if let Some(dir) = &a.out {
        create_dir(dir)?;
    }
    let config = TrainConfig {
        batch_size,
        steps: a.steps,
        seed: a.seed,
        checkpoint_dir: a.out.clone(),
        ..TrainConfig::default()
    };
    let report = train(&mut model, &samples, &config, |step, loss| {
        if (step + 1) % 100 == 0 {
            eprintln!("step {}\tloss {:.6}", step + 1, loss);
        }
    })?;
    let mut curve = String::from("step\tloss\n");
    for (i, l) in report.losses.iter().enumerate() {
        writeln!(curve, "{}\t{:.6}", i + 1, l).unwrap();
    }
    emit(&curve, a.out.as_ref().map(|d| d.join(LOSS_FILE)).as_deref())?;
    match report.losses.last() {
        Some(l) => println!("final_loss\t{:.6}", l),
        None => println!("final_loss\t-"),
    }
    Ok(())
}
