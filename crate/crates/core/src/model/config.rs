use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmb::{DeltaProjection, GmbConfig};
use crate::graph::HeuristicKind;
use crate::ssm::Discretization;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    #[default]
    GraphClass,
    NodeClass,
    GraphRegress,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Mean,
    Sum,
}

/// Where dropout sits relative to the branch residuals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropoutPlacement {
    /// `Dropout(X̂ + X)`, as Algorithm 2 is written.
    #[default]
    PostResidual,
    /// `Dropout(X̂) + X`.
    PreResidual,
}

/// Network shape and the stochastic recipe. Defaults follow the Peptides-Func
/// column of the reference hyperparameter table where it applies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub node_feat_dim: usize,
    pub edge_feat_dim: usize,
    pub pe_dim: usize,
    pub heuristic: HeuristicKind,
    /// Uniform `[0, 1)` jitter on the heuristic before sorting.
    pub noise: bool,
    pub n_bins: usize,
    pub m_eval: usize,
    pub dropout: f64,
    pub dropout_placement: DropoutPlacement,
    pub state_dim: usize,
    pub conv_kernel: usize,
    pub expand: usize,
    pub delta_projection: DeltaProjection,
    pub dt_rank: Option<usize>,
    pub discretization: Discretization,
    pub d_skip: bool,
    pub head: HeadKind,
    pub num_outputs: usize,
    pub pooling: Pooling,
    /// Zeroes and freezes every GMB output projection, leaving the GatedGCN
    /// branch plus residuals.
    pub mpnn_only: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            num_layers: 4,
            hidden_dim: 96,
            node_feat_dim: 1,
            edge_feat_dim: 1,
            pe_dim: 0,
            heuristic: HeuristicKind::Degree,
            noise: true,
            n_bins: 1,
            m_eval: 5,
            dropout: 0.0,
            dropout_placement: DropoutPlacement::PostResidual,
            state_dim: 16,
            conv_kernel: 4,
            expand: 1,
            delta_projection: DeltaProjection::LowRank,
            dt_rank: None,
            discretization: Discretization::Zoh,
            d_skip: true,
            head: HeadKind::GraphClass,
            num_outputs: 2,
            pooling: Pooling::Mean,
            mpnn_only: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_layers", self.num_layers),
            ("hidden_dim", self.hidden_dim),
            ("n_bins", self.n_bins),
            ("m_eval", self.m_eval),
            ("state_dim", self.state_dim),
            ("conv_kernel", self.conv_kernel),
            ("expand", self.expand),
            ("num_outputs", self.num_outputs),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.dt_rank == Some(0) {
            return Err(Error::Config("dt_rank must be at least 1".into()));
        }
        Ok(())
    }

    pub fn gmb(&self) -> GmbConfig {
        GmbConfig {
            dim: self.hidden_dim,
            expand: self.expand,
            state_dim: self.state_dim,
            conv_kernel: self.conv_kernel,
            delta_projection: self.delta_projection,
            dt_rank: self.dt_rank,
            discretization: self.discretization,
            d_skip: self.d_skip,
            ..GmbConfig::default()
        }
    }

    pub fn node_input_dim(&self) -> usize {
        self.node_feat_dim + self.pe_dim
    }
}
