pub mod cli;
pub mod engine;
pub mod error;
pub mod factor;
pub mod graph;
pub mod kernel;
pub mod mc;
pub mod oracle;
pub mod poly;
pub mod quad;

pub use error::{Error, Result};
