//! Graph state-space models: selective state-space blocks over heuristic node orderings,
//! combined with gated message passing for graph-level prediction.

pub mod bench;
pub mod checks;
pub mod error;
pub mod gmb;
pub mod graph;
pub mod model;
pub mod mpnn;
pub mod nn;
pub mod profile;
pub mod rng;
pub mod ssm;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Graph, Label};
pub use tensor::Tensor;
