use indexmap::IndexMap;
use ssan_tensor::Tensor;

use super::lexicon::{lexicon_decode, Lexicon};
use crate::error::{Error, Result};
use crate::model::{Encoded, Recognizer};

#[derive(Clone, Debug, PartialEq)]
pub struct Decoded<T> {
    pub text: String,
    pub indices: Vec<usize>,
    /// Log-probability of the emitted symbols including eos.
    pub log_prob: f64,
    /// Decoding stopped at the step limit before eos.
    pub truncated: bool,
    /// Spatial attention `[H', W']` of every step taken, eos included.
    pub alphas: Vec<Tensor<T>>,
}

/// Turns encoder output into text.
pub trait DecodeStrategy: Send + Sync {
    fn name(&self) -> &str;

    fn decode(&self, model: &Recognizer<f32>, encoded: &Encoded<f32>, max_steps: usize) -> Result<Decoded<f32>>;
}

pub struct GreedyStrategy;

impl DecodeStrategy for GreedyStrategy {
    fn name(&self) -> &str {
        "greedy"
    }

    fn decode(&self, model: &Recognizer<f32>, encoded: &Encoded<f32>, max_steps: usize) -> Result<Decoded<f32>> {
        model.decode_greedy(encoded, max_steps)
    }
}

/// Greedy decoding snapped to the nearest lexicon word.
pub struct LexiconStrategy {
    lexicon: Lexicon,
}

impl LexiconStrategy {
    pub fn new(lexicon: Lexicon) -> Result<Self> {
        if lexicon.is_empty() {
            return Err(Error::input("lexicon is empty"));
        }
        Ok(Self { lexicon })
    }
}

impl DecodeStrategy for LexiconStrategy {
    fn name(&self) -> &str {
        "lexicon"
    }

    fn decode(&self, model: &Recognizer<f32>, encoded: &Encoded<f32>, max_steps: usize) -> Result<Decoded<f32>> {
        let greedy = model.decode_greedy(encoded, max_steps)?;
        let charset = model.charset();
        let word = lexicon_decode(&greedy.text, &self.lexicon, |w| {
            model.sequence_log_prob(encoded, &charset.encode(w)?)
        })?;
        if word == greedy.text {
            return Ok(greedy);
        }
        let indices = charset.encode(&word)?;
        let log_prob = model.sequence_log_prob(encoded, &indices)?;
        Ok(Decoded { text: word, indices, log_prob, truncated: false, alphas: greedy.alphas })
    }
}

pub type StrategyFactory = fn(Option<&Lexicon>) -> Result<Box<dyn DecodeStrategy>>;

/// Decode strategies by name.
pub struct StrategyRegistry {
    factories: IndexMap<&'static str, StrategyFactory>,
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        let mut r = Self { factories: IndexMap::new() };
        r.register("greedy", |_| Ok(Box::new(GreedyStrategy)));
        r.register("lexicon", |lex| {
            let lex = lex.ok_or_else(|| Error::input("lexicon decoding needs a lexicon"))?;
            Ok(Box::new(LexiconStrategy::new(lex.clone())?))
        });
        r
    }
}

impl StrategyRegistry {
    pub fn register(&mut self, name: &'static str, factory: StrategyFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn build(&self, name: &str, lexicon: Option<&Lexicon>) -> Result<Box<dyn DecodeStrategy>> {
        let f = self
            .factories
            .get(name)
            .ok_or_else(|| Error::input(format!("unknown decode strategy {:?}", name)))?;
        f(lexicon)
    }
}
