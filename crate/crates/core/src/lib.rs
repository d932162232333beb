//! Backbone-free core of a long-video grounding stack.
//!
//! Everything here is pure computation over owned buffers and needs only
//! `alloc`: dense tensor primitives with vector-Jacobian products, token
//! shuffle compression, the temporal adaptive position encoder (TAPE),
//! frame sampling and token assembly, grounding/highlight metrics and the
//! temporal grounded caption data pipeline. File formats, configuration and
//! the command line live in the `timesuite` companion crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod gradcheck;
pub mod grounding;
pub mod ops;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod tgc;
pub mod token_shuffle;
pub mod video;

pub use error::{Error, Result};
pub use tensor::{Conv1dSpec, Tensor2D};
