use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::graph::{laplacian_pe, Graph, Label, NodeHeuristic};
use crate::tensor::Tensor;

/// A graph with its model inputs precomputed: node features concatenated
/// with Laplacian PE, edge features, and the sort heuristic.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedGraph {
    pub edges: Vec<(usize, usize)>,
    pub node_in: Tensor,
    pub edge_in: Tensor,
    pub heuristic: Vec<f64>,
    pub label: Option<Label>,
}

impl PreparedGraph {
    pub fn new(g: &Graph, cfg: &ModelConfig) -> Result<Self> {
        g.validate()?;
        if g.num_nodes == 0 {
            return Err(Error::InvalidGraph {
                field: "num_nodes",
                detail: "graph has no nodes".into(),
            });
        }
        if g.node_feat_dim() != cfg.node_feat_dim
            || (g.num_edges() > 0 && g.edge_feat_dim() != cfg.edge_feat_dim)
        {
            return Err(Error::Config(format!(
                "{} has feature widths ({}, {}) but the model expects ({}, {})",
                g.describe(),
                g.node_feat_dim(),
                g.edge_feat_dim(),
                cfg.node_feat_dim,
                cfg.edge_feat_dim
            )));
        }
        let pe = laplacian_pe(g, cfg.pe_dim)?;
        let rows: Vec<Vec<f64>> = g
            .node_feat
            .iter()
            .zip(pe)
            .map(|(f, p)| f.iter().chain(&p).copied().collect())
            .collect();
        Ok(PreparedGraph {
            edges: g.edges.clone(),
            node_in: Tensor::from_rows(&rows, cfg.node_input_dim())?,
            edge_in: Tensor::from_rows(&g.edge_feat, cfg.edge_feat_dim)?,
            heuristic: NodeHeuristic::compute(g, cfg.heuristic)?.values,
            label: g.label.clone(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.node_in.rows()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Node `i` becomes node `perm[i]`; edge order is kept.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        let l = self.num_nodes();
        let mut inverse = vec![0; l];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let mut heuristic = vec![0.0; l];
        for (i, &p) in perm.iter().enumerate() {
            heuristic[p] = self.heuristic[i];
        }
        let label = self.label.as_ref().map(|lab| match lab {
            Label::NodeClasses(c) => Label::NodeClasses(inverse.iter().map(|&i| c[i]).collect()),
            other => other.clone(),
        });
        PreparedGraph {
            edges: self
                .edges
                .iter()
                .map(|&(s, d)| (perm[s], perm[d]))
                .collect(),
            node_in: self.node_in.gather_rows(&inverse),
            edge_in: self.edge_in.clone(),
            heuristic,
            label,
        }
    }
}

pub fn prepare_all(graphs: &[Graph], cfg: &ModelConfig) -> Result<Vec<PreparedGraph>> {
    graphs.iter().map(|g| PreparedGraph::new(g, cfg)).collect()
}
