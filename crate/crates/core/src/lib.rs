pub mod classifier;
pub mod combiner;
pub mod corpus;
pub mod encoder;
pub mod encoder_attn;
pub mod encoder_lm;
pub mod error;
pub mod numerics;
pub mod pipeline;
mod util;

pub use error::{Error, Result};
