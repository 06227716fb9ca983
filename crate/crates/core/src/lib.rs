pub mod error;
pub mod eval;
pub mod graphio;
pub mod hsic;
pub mod layers;
pub mod model;
pub mod tensor;

pub use error::{Error, Result};
