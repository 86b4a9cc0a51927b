pub mod consensus;
pub mod embedding;
pub mod error;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod oracle;
mod par;
pub mod pipeline;
pub mod tensor;

pub use error::{Error, Result};
