//! Lightweight pyramid deraining network.
//!
//! Images are split into a Laplacian pyramid, each level is refined by a
//! small recursive-residual convolutional sub-network, and the clean
//! Gaussian pyramid is rebuilt from the refined levels. Everything needed to
//! train the network end to end lives here: a small 4-D tensor type, a
//! reverse-mode differentiation tape, the pyramid operators, the model,
//! the ℓ1/SSIM objective, PSNR, Adam, and a synthetic rain generator.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. File formats, image IO and the command line live in the `lpnet`
//! crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod adam;
pub mod conv;
mod error;
pub mod filter;
pub mod gradcheck;
pub mod graph;
pub mod loss;
pub mod model;
pub mod pyramid;
pub mod rain;
mod real;
pub mod scene;
pub mod stats;
pub mod tape;
mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Eager, Graph};
pub use real::Real;
pub use tape::{Gradients, ParamId, Tape, Var};
pub use tensor::{Dims, Tensor};
