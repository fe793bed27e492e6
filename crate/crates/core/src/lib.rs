pub mod error;
pub mod linalg;
pub mod pauli;
pub mod process;
pub mod cluster;
pub mod estimate;
pub mod simdata;
pub mod cli;

pub use error::{Error, Result};
