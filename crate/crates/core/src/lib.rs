pub mod artifact;
pub mod clustering;
pub mod dataset;
pub mod ensemble;
pub mod eval;
pub mod error;
pub mod exec;
pub mod features;
pub mod graph_embed;
pub mod model;
pub mod pipeline;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
pub use exec::Exec;
