//! Compressed-sensing MRI reconstruction with cascades of U-nets operating in
//! image and k-space domains, interleaved with hard data consistency.

pub mod data;
pub mod cascade;
pub mod error;
pub mod eval;
pub mod network;
pub mod pipeline;
pub mod sampling;
pub mod train;
pub mod scalar;
pub mod seed;
pub mod tensor;
pub mod transform;

pub use error::{Error, Result};
