use std::path::Path;

use crate::edit::edit_distance;
use crate::error::{Error, Result};

/// Candidate words for constrained decoding, lowercased.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Lexicon {
    words: Vec<String>,
}

impl Lexicon {
    pub fn new<S: AsRef<str>>(words: impl IntoIterator<Item = S>) -> Self {
        Self {
            words: words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        }
    }

    /// One word per line; blank lines are ignored.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(text.lines()))
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        let w = word.to_lowercase();
        self.words.contains(&w)
    }
}

/// The lexicon word closest to `prediction` in edit distance; among equally
/// close words, the one `rescore` gives the highest log-probability, then
/// the earliest.
pub fn lexicon_decode<F>(prediction: &str, lexicon: &Lexicon, mut rescore: F) -> Result<String>
where
    F: FnMut(&str) -> Result<f64>,
{
    if lexicon.is_empty() {
        return Err(Error::input("lexicon is empty"));
    }
    let distances: Vec<usize> = lexicon.words().iter().map(|w| edit_distance(prediction, w)).collect();
    let best = *distances.iter().min().expect("nonempty");
    let mut candidates = lexicon.words().iter().zip(&distances).filter(|(_, &d)| d == best).map(|(w, _)| w);
    let first = candidates.next().expect("at least one minimum");
    let rest: Vec<&String> = candidates.collect();
    if rest.is_empty() {
        return Ok(first.clone());
    }
    let mut winner = first;
    let mut winner_lp = rescore(first)?;
    for w in rest {
        if w == winner {
            continue;
        }
        let lp = rescore(w)?;
        if lp > winner_lp {
            winner = w;
            winner_lp = lp;
        }
    }
    Ok(winner.clone())
}
