pub mod cli;
pub mod error;
pub mod evaluation;
pub mod synth;
pub mod tensor_io;
pub mod thresholding;
pub mod uncertainty;

pub use error::{Error, Result};
