//! Scene-text recognition with a scale-aware multi-scale encoder and a
//! spatial-attention LSTM decoder, trained on procedurally rendered text.

pub mod charset;
pub mod checkpoint;
pub mod data;
pub mod decoder;
pub mod edit;
pub mod encoder;
pub mod gradcheck;
mod error;
pub mod image;
pub mod model;
pub mod params;
pub mod train;

pub use error::{Error, Result};
pub use model::{ModelConfig, Recognizer};
