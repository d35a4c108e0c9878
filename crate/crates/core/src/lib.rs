pub mod bench;
pub mod error;
pub mod fem;
pub mod mesh;
pub mod ocp;
pub mod persist;
pub mod plot;
pub mod problems;
pub mod rom;
pub mod sampling;
pub mod sparse;
pub mod wpod;

pub use error::{Error, Result};
