use std::path::PathBuf;

use ssan::checkpoint;
use ssan::data::load_dataset;
use ssan::decoder::{Lexicon, StrategyRegistry};
use ssan::train::{default_max_steps, evaluate, REPORT_HEADER};

use super::emit;
use crate::Failure;

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// One word per line; adds lexicon-constrained rows to the report.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Decoding step limit; twice the longest label plus one by default.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Report path instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(a: Args) -> Result<(), Failure> {
    let model = checkpoint::load(&a.ckpt)?;
    let samples = load_dataset(&a.data)?;
    let lexicon = a.lexicon.as_deref().map(Lexicon::load).transpose()?;
    let max_steps = a.max_steps.unwrap_or_else(|| default_max_steps(&samples));
    let registry = StrategyRegistry::default();
    let mut names = vec!["greedy"];
    if lexicon.is_some() {
        names.push("lexicon");
    }
    let mut report = format!("{}\n", REPORT_HEADER);
    for name in names {
        let strategy = registry.build(name, lexicon.as_ref())?;
        let (rep, _) = evaluate(&model, &samples, strategy.as_ref(), max_steps, true)?;
        report.push_str(&rep.to_tsv(name));
    }
    emit(&report, a.out.as_deref())?;
    Ok(())
}
