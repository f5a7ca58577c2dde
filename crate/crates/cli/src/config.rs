use std::path::Path;

use anyhow::{Context, Result};
use gmamba::graph::SynthSpec;
use gmamba::model::ModelConfig;
use gmamba::train::TrainConfig;
use serde::{Deserialize, Serialize};

/// Constant-degree size sweep used by `bench`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    /// Each node links to this many neighbours on either side of a ring.
    pub half_degree: usize,
    /// Overrides `model.hidden_dim` for the sweep and the dense comparator.
    pub hidden_dim: usize,
    pub num_layers: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: vec![64, 128, 256, 512, 1024, 2048],
            half_degree: 2,
            hidden_dim: 8,
            num_layers: 2,
        }
    }
}

/// Everything one invocation needs, loadable from a single JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: SynthSpec,
    pub data_seed: u64,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let data = SynthSpec {
            num_graphs: 600,
            ..SynthSpec::default()
        };
        RunConfig {
            model: ModelConfig {
                num_layers: 2,
                hidden_dim: 32,
                node_feat_dim: data.node_feat_dim(),
                ..ModelConfig::default()
            },
            train: TrainConfig {
                epochs: 40,
                eval_every: 5,
                ..TrainConfig::default()
            },
            data,
            data_seed: 1,
            bench: BenchConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
