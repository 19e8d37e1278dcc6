pub mod compact;
pub mod cycle;
pub mod designer;
pub mod error;
pub mod optics;
pub mod slto;
pub mod tensor;
pub mod thermal;

pub use error::{Error, Result};
