use std::fmt::Write;

use super::eval::{default_max_steps, evaluate, EvalReport};
use super::trainer::{train, TrainConfig};
use crate::data::{generate_dataset, GenSpec, GlyphFont, LabeledSample};
use crate::decoder::GreedyStrategy;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Recognizer};

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub name: String,
    pub spec: GenSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationConfig {
    /// Encoder variant strings, one row each.
    pub variants: Vec<String>,
    pub width_div: usize,
    pub model_seed: u64,
    pub train_data: GenSpec,
    pub splits: Vec<Split>,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub parameters: usize,
    pub final_loss: f64,
    /// One report per split, in split order.
    pub reports: Vec<EvalReport>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub splits: Vec<String>,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, variant: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn split_index(&self, name: &str) -> Option<usize> {
        self.splits.iter().position(|s| s == name)
    }

    /// Accuracy per variant and split, then accuracy per variant, split and
    /// text length.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        write!(out, "variant\tparameters\tfinal_loss").unwrap();
        for s in &self.splits {
            write!(out, "\t{}", s).unwrap();
        }
        writeln!(out).unwrap();
        for r in &self.rows {
            write!(out, "{}\t{}\t{:.4}", r.variant, r.parameters, r.final_loss).unwrap();
            for rep in &r.reports {
                write!(out, "\t{:.4}", rep.accuracy()).unwrap();
            }
            writeln!(out).unwrap();
        }
        writeln!(out).unwrap();
        writeln!(out, "variant\tsplit\tlength\tcount\taccuracy").unwrap();
        for r in &self.rows {
            for (split, rep) in self.splits.iter().zip(&r.reports) {
                for (len, t) in &rep.by_length {
                    writeln!(out, "{}\t{}\t{}\t{}\t{:.4}", r.variant, split, len, t.count, t.accuracy()).unwrap();
                }
            }
        }
        out
    }
}

/// Trains every variant from the same seed on the same data and evaluates
/// each on every split with greedy decoding.
pub fn run_ablation(
    config: &AblationConfig,
    font: &GlyphFont,
    mut progress: impl FnMut(&str),
) -> Result<AblationReport> {
    if config.variants.len() < 2 {
        return Err(Error::input("an ablation needs at least two encoder variants"));
    }
    let train_set = generate_dataset(&config.train_data, font)?;
    let splits: Vec<(String, Vec<LabeledSample>)> = config
        .splits
        .iter()
        .map(|s| Ok((s.name.clone(), generate_dataset(&s.spec, font)?)))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for variant in &config.variants {
        let mc = ModelConfig {
            encoder: variant.clone(),
            width_div: config.width_div,
            charset: config.train_data.charset.clone(),
        };
        let mut model = Recognizer::<f32>::new(mc, config.model_seed)?;
        let name = model.config().encoder.clone();
        progress(&format!("training {}", name));
        let report = train(&mut model, &train_set, &config.train, |_, _| {})?;
        let mut reports = Vec::new();
        for (split, samples) in &splits {
            progress(&format!("evaluating {} on {}", name, split));
            let (rep, _) = evaluate(&model, samples, &GreedyStrategy, default_max_steps(samples), true)?;
            reports.push(rep);
        }
        rows.push(AblationRow {
            variant: name,
            parameters: model.params().trainable_count(),
            final_loss: report.losses.last().copied().unwrap_or(f64::NAN),
            reports,
        });
    }
    Ok(AblationReport { splits: splits.into_iter().map(|s| s.0).collect(), rows })
}
