pub mod cli;
pub mod dilate;
pub mod error;
pub mod factors;
pub mod hyper;
pub mod matcore;
pub mod schur;
pub mod weights;

pub use error::{Error, Result};
