//! Dense numeric building blocks with hand-written backward passes.

pub mod act;
mod conv;
mod dropout;
mod gradcheck;
mod linear;
mod mlp;
mod norm;
mod params;

pub use conv::{causal_dwconv1d_backward, causal_dwconv1d_forward, conv_flops, CausalConv};
pub use dropout::{dropout_backward, dropout_flops, dropout_forward};
pub use gradcheck::{
    grad_check, grad_check_params, probe, relative_error, GradCheckReport, DEFAULT_STEP,
};
pub use linear::{linear_backward, linear_flops, linear_forward, Linear};
pub use mlp::{Mlp, MlpCache};
pub use norm::{
    layer_norm_backward, layer_norm_flops, layer_norm_forward, LayerNorm, LayerNormCache,
    LAYER_NORM_EPS,
};
pub use params::{ParamId, ParamStore, CHECKPOINT_VERSION};
