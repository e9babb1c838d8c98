pub mod data;
pub mod error;
pub mod eval;
pub mod exec;
pub mod model;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
