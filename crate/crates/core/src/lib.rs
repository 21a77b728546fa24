//! Tensor engine for volumetric segmentation models.
//!
//! Provides the pieces every other crate builds on: a dense row-major
//! [`Tensor`] over `f32`/`f64`, a reverse-mode autodiff [`Tape`], a
//! splittable counter-based [`Rng`] with bitwise-reproducible streams, and
//! the 3D convolution / normalization / activation kernels used by the
//! encoder-decoder network. All kernels assign each output cell to exactly
//! one task and reduce serially within it, so results are identical for any
//! thread count.

pub mod element;
pub mod error;
pub mod finite_diff;
pub mod gradcheck;
pub mod ops;
pub mod param;
pub mod rng;
pub mod simd;
pub mod tape;
pub mod tensor;
pub mod threading;

pub use element::Element;
pub use error::CoreError;
pub use param::Param;
pub use rng::Rng;
pub use tape::{backward, Gradients, NodeId, Tape};
pub use tensor::Tensor;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;
