pub mod cli;
pub mod corpus;
pub mod decode;
pub mod error;
pub mod eval;
pub mod io;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
