//! Report generation from image features and patient demographics.

pub mod dataset;
pub mod demographics;
mod error;
pub mod evaluation;
pub mod model;
pub mod text;
pub mod trainer;

pub use error::{Error, ErrorClass, Result};
