use std::collections::BTreeMap;
use std::fmt::Write;

use rayon::prelude::*;

use crate::data::{LabeledSample, ScaleBucket};
use crate::decoder::DecodeStrategy;
use crate::edit::edit_distance;
use crate::error::Result;
use crate::model::Recognizer;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub count: usize,
    pub correct: usize,
}

impl Tally {
    pub fn accuracy(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.correct as f64 / self.count as f64
        }
    }

    fn add(&mut self, correct: bool) {
        self.count += 1;
        self.correct += usize::from(correct);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub label: String,
    pub text: String,
    pub log_prob: f64,
    pub edit: usize,
}

impl Prediction {
    pub fn correct(&self) -> bool {
        self.text.eq_ignore_ascii_case(&self.label)
    }

    /// Edit distance over the longer of the two strings.
    pub fn normalized_edit(&self) -> f64 {
        let len = self.label.chars().count().max(self.text.chars().count()).max(1);
        self.edit as f64 / len as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub overall: Tally,
    pub by_length: BTreeMap<usize, Tally>,
    pub by_scale: BTreeMap<ScaleBucket, Tally>,
    pub mean_normalized_edit: f64,
}

impl EvalReport {
    /// Aggregates predictions in order.
    pub fn from_predictions(samples: &[LabeledSample], predictions: &[Prediction]) -> Self {
        let mut overall = Tally::default();
        let mut by_length: BTreeMap<usize, Tally> = BTreeMap::new();
        let mut by_scale: BTreeMap<ScaleBucket, Tally> = BTreeMap::new();
        let mut edit_sum = 0.0;
        for (s, p) in samples.iter().zip(predictions) {
            let ok = p.correct();
            overall.add(ok);
            by_length.entry(s.label.chars().count()).or_default().add(ok);
            by_scale.entry(ScaleBucket::of(s)).or_default().add(ok);
            edit_sum += p.normalized_edit();
        }
        let mean_normalized_edit = if overall.count == 0 { 0.0 } else { edit_sum / overall.count as f64 };
        Self { overall, by_length, by_scale, mean_normalized_edit }
    }

    pub fn accuracy(&self) -> f64 {
        self.overall.accuracy()
    }

    /// `section, key, count, correct, accuracy` rows with a header.
    pub fn to_tsv(&self, name: &str) -> String {
        let mut out = String::new();
        let mut row = |section: &str, key: &str, t: &Tally| {
            writeln!(out, "{}\t{}\t{}\t{}\t{}\t{:.4}", name, section, key, t.count, t.correct, t.accuracy())
                .expect("write to string");
        };
        row("overall", "all", &self.overall);
        for (len, t) in &self.by_length {
            row("length", &len.to_string(), t);
        }
        for (bucket, t) in &self.by_scale {
            row("scale", bucket.name(), t);
        }
        writeln!(out, "{}\tedit\tmean_normalized\t{}\t-\t{:.4}", name, self.overall.count, self.mean_normalized_edit)
            .expect("write to string");
        out
    }
}

pub const REPORT_HEADER: &str = "decoder\tsection\tkey\tcount\tcorrect\taccuracy";

/// Twice the longest label plus one for eos.
pub fn default_max_steps(samples: &[LabeledSample]) -> usize {
    2 * samples.iter().map(|s| s.label.chars().count()).max().unwrap_or(0) + 1
}

/// Decodes every sample. With `parallel` the samples are spread over
/// worker threads; each prediction depends only on its own sample, so the
/// result is identical either way.
pub fn predict(
    model: &Recognizer<f32>,
    samples: &[LabeledSample],
    strategy: &dyn DecodeStrategy,
    max_steps: usize,
    parallel: bool,
) -> Result<Vec<Prediction>> {
    let one = |s: &LabeledSample| -> Result<Prediction> {
        let encoded = model.encode(&model.prepare(&s.image))?;
        let d = strategy.decode(model, &encoded, max_steps)?;
        Ok(Prediction { edit: edit_distance(&d.text, &s.label), label: s.label.clone(), text: d.text, log_prob: d.log_prob })
    };
    if parallel {
        samples.par_iter().map(one).collect()
    } else {
        samples.iter().map(one).collect()
    }
}

pub fn evaluate(
    model: &Recognizer<f32>,
    samples: &[LabeledSample],
    strategy: &dyn DecodeStrategy,
    max_steps: usize,
    parallel: bool,
) -> Result<(EvalReport, Vec<Prediction>)> {
    if samples.is_empty() {
        return Err(crate::error::Error::input("evaluation set is empty"));
    }
    let predictions = predict(model, samples, strategy, max_steps, parallel)?;
    Ok((EvalReport::from_predictions(samples, &predictions), predictions))
}
