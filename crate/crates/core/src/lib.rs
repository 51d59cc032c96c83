pub mod active;
pub mod error;
pub mod graph;
pub mod harness;
pub mod kl;
pub mod linalg;
pub mod problem;
pub mod procrustes;
pub mod ssm;

pub use error::{Error, Result};
