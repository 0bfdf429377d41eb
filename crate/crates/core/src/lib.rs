pub mod cli;
pub mod data;
pub mod energy;
pub mod error;
pub mod flow;
pub mod likelihood;
pub mod linalg;
pub mod model;
pub mod spectrum;
pub mod train;

pub use error::{HifmError, Result};
