//! Multi-output HAT transducer (ASR, capitalization, pause prediction) with
//! joint end-to-end and internal-language-model training on text-only data.

pub mod error;
pub mod numerics;

pub use error::{Error, Result};
pub mod data;
pub mod decode;
pub mod labelkit;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod train;
