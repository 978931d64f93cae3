pub mod analysis;
pub mod autodiff;
pub mod charts;
pub mod data;
pub mod encoder;
pub mod error;
pub mod models;
pub mod scoring;
pub mod train;

pub use error::{Error, Result};
