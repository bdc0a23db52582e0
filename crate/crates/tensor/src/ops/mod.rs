pub(crate) mod broadcast;
pub(crate) mod conv;
pub mod norm;
pub(crate) mod pool;
pub(crate) mod resize;
pub(crate) mod softmax;
