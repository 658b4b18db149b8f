pub mod corpus;
pub mod error;
pub mod features;
pub mod lexicon;
pub mod modeling;
pub mod network;
pub mod pipeline;
pub mod stats;
pub mod synth;
pub mod textfilter;

pub use error::{Error, Result};
