pub mod autodiff;
pub mod critic;
pub mod env;
pub mod error;
pub mod harness;
pub mod learn;
pub mod policy;
pub mod sop;

pub use error::{Error, Result};
