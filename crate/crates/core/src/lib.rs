pub mod basis;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod eval;
pub mod error;
pub mod inference;
pub mod informativeness;
pub mod io;
pub mod mixture;
pub mod model;
pub mod sampler;

pub use error::{Error, Result};
