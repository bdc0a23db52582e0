//! Dense tensors and a tape-based reverse-mode differentiator providing the
//! operators needed by the S-SAN text recognizer.

mod error;
mod graph;
mod lstm;
pub(crate) mod ops;
mod scalar;
mod tensor;

pub mod gradcheck;

pub use error::{Result, TensorError};
pub use graph::{Activation, BnMode, Gradients, Graph, OpKind, Var};
pub use lstm::{lstm_step, LstmParams};
pub use ops::norm::{BatchStats, BN_EPSILON};
pub use scalar::Float;
pub use tensor::Tensor;

/// Bilinear resampling of `planes` row-major `in_h×in_w` planes, outside of
/// any graph. Same sampling convention as [`Graph::bilinear_resize`].
pub fn bilinear_resize_planes<T: Float>(
    x: &[T],
    planes: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<T> {
    assert_eq!(x.len(), planes * in_h * in_w, "plane buffer size mismatch");
    ops::resize::ResizePlan::new(planes, in_h, in_w, out_h, out_w).forward(x)
}
