pub mod cli;
pub mod corpus;
pub mod decode_batch;
pub mod decode_window;
pub mod encoder;
pub mod error;
pub mod fftconv;
pub mod gram;
pub mod kernelbank;
pub mod linalg;
pub mod metrics;
pub mod sigio;
pub mod sweep;
pub mod validate;

pub use error::{Error, Result};
