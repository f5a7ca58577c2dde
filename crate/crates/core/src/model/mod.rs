//! The full network: input encoders, `K` layers of GatedGCN + GMB combined
//! by an MLP, and a graph- or node-level head.

mod config;
mod loss;
mod network;
mod prepared;

pub use config::{DropoutPlacement, HeadKind, ModelConfig, Pooling};
pub use loss::{argmax_rows, cross_entropy, mean_absolute_error};
pub use network::{GmbLayer, GraphMamba, Mode, ModelTrace, StreamKey};
pub use prepared::{prepare_all, PreparedGraph};
