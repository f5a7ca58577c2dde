use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HeuristicKind {
    #[default]
    Degree,
    EigenvectorCentrality,
    None,
}

/// Per-node sort key.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeHeuristic {
    pub kind: HeuristicKind,
    pub values: Vec<f64>,
}

impl NodeHeuristic {
    pub fn compute(g: &Graph, kind: HeuristicKind) -> Result<Self> {
        let values = match kind {
            HeuristicKind::Degree => node_degrees(g),
            HeuristicKind::EigenvectorCentrality => eigenvector_centrality(g, 1e-10, 10_000)?,
            HeuristicKind::None => vec![0.0; g.num_nodes],
        };
        Ok(NodeHeuristic { kind, values })
    }
}

/// Undirected degree: number of distinct neighbors, with a self-loop adding 1.
pub fn node_degrees(g: &Graph) -> Vec<f64> {
    g.undirected_neighbors()
        .iter()
        .map(|nb| nb.len() as f64)
        .collect()
}

/// Principal eigenvector of the symmetric adjacency matrix by power
/// iteration on `A + I` from the all-ones vector.
///
/// The identity shift keeps bipartite graphs (paths, stars) from oscillating
/// between the `+λ` and `-λ` eigenvectors without changing the eigenvectors.
/// Each connected component is iterated on its own and normalized to unit
/// length; the concatenated vector is then rescaled to unit length.
pub fn eigenvector_centrality(g: &Graph, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!(
            "centrality tolerance must be positive, got {tol}"
        )));
    }
    let nb = g.undirected_neighbors();
    let mut out = vec![0.0; g.num_nodes];
    for comp in g.components() {
        let local: std::collections::HashMap<usize, usize> =
            comp.iter().enumerate().map(|(k, &u)| (u, k)).collect();
        let adj: Vec<Vec<usize>> = comp
            .iter()
            .map(|&u| nb[u].iter().map(|v| local[v]).collect())
            .collect();
        let n = comp.len();
        let mut x = vec![1.0 / (n as f64).sqrt(); n];
        let mut converged = false;
        for _ in 0..max_iter {
            let mut next: Vec<f64> = (0..n)
                .map(|i| x[i] + adj[i].iter().map(|&j| x[j]).sum::<f64>())
                .collect();
            let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
            next.iter_mut().for_each(|v| *v /= norm);
            let delta = next
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            x = next;
            if delta < tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence {
                graph: g.describe(),
                iters: max_iter,
            });
        }
        for (k, &u) in comp.iter().enumerate() {
            out[u] = x[k];
        }
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        out.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(out)
}
