//! Multi-scale progressive fusion network for single-image deraining.
//!
//! Everything runs on the CPU on top of a self-contained rank-4 tensor type
//! with tape-based reverse-mode autodiff — no GPU, no external ML runtime.
//! The crate covers the full loop: synthesizing rainy/clean image pairs,
//! building Gaussian input pyramids, running the multi-scale network,
//! training it with Adam under a Charbonnier + edge loss, and scoring results
//! with PSNR/SSIM.
//!
//! Start with the `examples/` directory — there is one runnable example per
//! capability — or the `mspfn` binary, which exposes the same functionality
//! as subcommands.

pub mod cli;
pub mod data;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod pyramid;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Tape, Tensor};
