//! Signal classification with two pipelines: direct 1D classification with
//! an InceptionTime-style network, and Morlet-scalogram images classified by
//! a small residual network. Everything from the tensor kernels and their
//! gradients up to the training loop lives in this crate.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod nn;
pub mod ops;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod wavelet;

pub use error::{Error, Result};
pub use ops::Mode;
pub use tape::{GradTape, Var};
pub use tensor::{Scalar, Tensor};
