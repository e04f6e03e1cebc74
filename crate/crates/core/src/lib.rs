pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod ontology;
pub mod selector;
pub mod summarizer;
pub mod synth;
pub mod tensor;

mod training;

pub use error::{Error, Result};
