//! Procedural labeled text images and their on-disk layout.

mod dataset;
pub mod font;
mod render;

pub use dataset::{
    generate_dataset, load_dataset, resize_to_fixed, sample_rng, save_dataset, ScaleBucket, IMAGE_DIR, MANIFEST,
    META, SCALE_REFERENCE_WIDTH,
};
pub use font::{Glyph, GlyphFont};
pub use render::{random_label, render_word, GenSpec, LabeledSample, LengthDistribution, MARGIN};
