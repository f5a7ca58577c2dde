//! Graph representation, JSON-lines I/O, node heuristics, Laplacian
//! positional encodings and the synthetic long-range dataset.

mod heuristics;
mod io;
mod pe;
mod synth;

pub use heuristics::{eigenvector_centrality, node_degrees, HeuristicKind, NodeHeuristic};
pub use io::{parse_graphs, read_graphs, to_jsonl, write_graphs};
pub use pe::{laplacian_pe, symmetric_eigen};
pub use synth::{make_longrange_dataset, SynthSpec, Topology};

use crate::error::{Error, Result};

/// Task label attached to a graph.
#[derive(Clone, Debug, PartialEq)]
pub enum Label {
    /// One class index for the whole graph.
    Class(usize),
    /// One class index per node.
    NodeClasses(Vec<usize>),
    /// Real-valued target vector (graph regression).
    Values(Vec<f64>),
}

/// A graph with `num_nodes` nodes and a directed edge list.
///
/// Undirected graphs carry both directions of every edge. Feature rows are
/// aligned with nodes and edges respectively.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    pub node_feat: Vec<Vec<f64>>,
    pub edge_feat: Vec<Vec<f64>>,
    pub label: Option<Label>,
}

impl Graph {
    /// Builds a graph and checks every structural invariant.
    pub fn new(
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        node_feat: Vec<Vec<f64>>,
        edge_feat: Vec<Vec<f64>>,
        label: Option<Label>,
    ) -> Result<Self> {
        let g = Graph {
            num_nodes,
            edges,
            node_feat,
            edge_feat,
            label,
        };
        g.validate()?;
        Ok(g)
    }

    /// Featureless undirected graph from an undirected edge list; every node
    /// gets a single constant feature and every edge a single constant feature.
    pub fn undirected(num_nodes: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut edges = Vec::with_capacity(pairs.len() * 2);
        for &(u, v) in pairs {
            edges.push((u, v));
            if u != v {
                edges.push((v, u));
            }
        }
        let e = edges.len();
        Graph::new(
            num_nodes,
            edges,
            vec![vec![1.0]; num_nodes],
            vec![vec![1.0]; e],
            None,
        )
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_feat_dim(&self) -> usize {
        self.node_feat.first().map_or(0, Vec::len)
    }

    pub fn edge_feat_dim(&self) -> usize {
        self.edge_feat.first().map_or(0, Vec::len)
    }

    pub fn describe(&self) -> String {
        format!("graph(L={}, E={})", self.num_nodes, self.edges.len())
    }

    pub fn validate(&self) -> Result<()> {
        for (k, &(s, d)) in self.edges.iter().enumerate() {
            if s >= self.num_nodes || d >= self.num_nodes {
                return Err(Error::InvalidGraph {
                    field: "edges",
                    detail: format!(
                        "edge {} = ({}, {}) out of range for num_nodes = {}",
                        k, s, d, self.num_nodes
                    ),
                });
            }
        }
        if self.node_feat.len() != self.num_nodes {
            return Err(Error::InvalidGraph {
                field: "node_feat",
                detail: format!("{} rows for {} nodes", self.node_feat.len(), self.num_nodes),
            });
        }
        if self.edge_feat.len() != self.edges.len() {
            return Err(Error::InvalidGraph {
                field: "edge_feat",
                detail: format!(
                    "{} rows for {} edges",
                    self.edge_feat.len(),
                    self.edges.len()
                ),
            });
        }
        let fdim = self.node_feat_dim();
        if let Some(i) = self.node_feat.iter().position(|r| r.len() != fdim) {
            return Err(Error::InvalidGraph {
                field: "node_feat",
                detail: format!(
                    "row {} has width {}, expected {}",
                    i,
                    self.node_feat[i].len(),
                    fdim
                ),
            });
        }
        let edim = self.edge_feat_dim();
        if let Some(i) = self.edge_feat.iter().position(|r| r.len() != edim) {
            return Err(Error::InvalidGraph {
                field: "edge_feat",
                detail: format!(
                    "row {} has width {}, expected {}",
                    i,
                    self.edge_feat[i].len(),
                    edim
                ),
            });
        }
        if let Some(Label::NodeClasses(c)) = &self.label {
            if c.len() != self.num_nodes {
                return Err(Error::InvalidGraph {
                    field: "y",
                    detail: format!("{} node labels for {} nodes", c.len(), self.num_nodes),
                });
            }
        }
        Ok(())
    }

    /// Undirected neighbor sets (sorted, deduplicated); a self-loop lists the
    /// node once in its own set.
    pub fn undirected_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.num_nodes];
        for &(s, d) in &self.edges {
            nb[s].push(d);
            nb[d].push(s);
        }
        for list in &mut nb {
            list.sort_unstable();
            list.dedup();
        }
        nb
    }

    /// Connected components of the undirected view, each listed in ascending
    /// node order, components ordered by their smallest node.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let nb = self.undirected_neighbors();
        let mut comp = vec![usize::MAX; self.num_nodes];
        let mut out = Vec::new();
        for start in 0..self.num_nodes {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![start];
            comp[start] = id;
            let mut stack = vec![start];
            while let Some(u) = stack.pop() {
                for &v in &nb[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = id;
                        members.push(v);
                        stack.push(v);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Relabels nodes so that old node `i` becomes node `perm[i]`; edges keep
    /// their order.
    pub fn relabel(&self, perm: &[usize]) -> Graph {
        let mut node_feat = vec![Vec::new(); self.num_nodes];
        for (i, row) in self.node_feat.iter().enumerate() {
            node_feat[perm[i]] = row.clone();
        }
        let label = self.label.as_ref().map(|l| match l {
            Label::NodeClasses(c) => {
                let mut out = vec![0; c.len()];
                for (i, &v) in c.iter().enumerate() {
                    out[perm[i]] = v;
                }
                Label::NodeClasses(out)
            }
            other => other.clone(),
        });
        Graph {
            num_nodes: self.num_nodes,
            edges: self
                .edges
                .iter()
                .map(|&(s, d)| (perm[s], perm[d]))
                .collect(),
            node_feat,
            edge_feat: self.edge_feat.clone(),
            label,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_edge() {
        let err =
            Graph::new(2, vec![(0, 2)], vec![vec![0.0]; 2], vec![vec![0.0]], None).unwrap_err();
        assert!(err.to_string().contains("edges"), "{err}");
    }

    #[test]
    fn rejects_feature_row_mismatch() {
        let err = Graph::new(3, vec![], vec![vec![0.0]; 2], vec![], None).unwrap_err();
        assert!(err.to_string().contains("node_feat"), "{err}");
    }

    #[test]
    fn components_of_two_paths() {
        let g = Graph::undirected(5, &[(0, 1), (3, 4)]).unwrap();
        assert_eq!(g.components(), vec![vec![0, 1], vec![2], vec![3, 4]]);
    }
}
