pub mod clustering;
pub mod design;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod graph;
pub mod matching;
pub mod seed;
pub mod similarity;
pub mod simulation;

pub use error::{Error, Result};
