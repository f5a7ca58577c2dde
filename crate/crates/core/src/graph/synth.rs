//! Synthetic "distant-pair match" graphs.
//!
//! Each graph is a path or ring backbone whose nodes all carry a random color
//! (one-hot) and a flag bit. Exactly two backbone nodes at graph distance
//! `distance` are flagged; the label is 1 iff their colors match. Every other
//! node's color is a distractor, so the label can only be read off by moving
//! information across `distance` hops. With `mark_with_leaf`, each flagged
//! node also gets a pendant leaf, which raises its degree above the backbone.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, Label};
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Path,
    Ring,
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub num_graphs: usize,
    /// Backbone size range, inclusive.
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Graph distance between the two flagged nodes.
    pub distance: usize,
    pub num_colors: usize,
    pub topology: Topology,
    pub mark_with_leaf: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_graphs: 1000,
            min_nodes: 14,
            max_nodes: 20,
            distance: 6,
            num_colors: 4,
            topology: Topology::Ring,
            mark_with_leaf: true,
        }
    }
}

impl SynthSpec {
    pub fn node_feat_dim(&self) -> usize {
        1 + self.num_colors
    }

    fn validate(&self) -> Result<()> {
        if self.distance == 0 {
            return Err(Error::Config("distance must be at least 1".into()));
        }
        if self.num_colors < 2 {
            return Err(Error::Config("need at least two colors".into()));
        }
        if self.min_nodes > self.max_nodes {
            return Err(Error::Config("min_nodes exceeds max_nodes".into()));
        }
        let need = match self.topology {
            Topology::Path => self.distance + 1,
            Topology::Ring | Topology::Mixed => 2 * self.distance.max(2),
        };
        if self.min_nodes < need {
            return Err(Error::Config(format!(
                "backbone of {} nodes cannot hold two nodes at distance {} ({:?} needs {})",
                self.min_nodes, self.distance, self.topology, need
            )));
        }
        Ok(())
    }
}

fn one_graph(spec: &SynthSpec, rng: &mut impl Rng) -> Graph {
    let n = rng.gen_range(spec.min_nodes..=spec.max_nodes);
    let ring = match spec.topology {
        Topology::Path => false,
        Topology::Ring => true,
        Topology::Mixed => rng.gen_bool(0.5),
    };
    let d = spec.distance;
    let (a, b) = if ring {
        let a = rng.gen_range(0..n);
        (a, (a + d) % n)
    } else {
        let a = rng.gen_range(0..n - d);
        (a, a + d)
    };

    let mut pairs: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    if ring {
        pairs.push((n - 1, 0));
    }
    let k = spec.num_colors;
    let mut colors: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    let matched = rng.gen_bool(0.5);
    colors[b] = if matched {
        colors[a]
    } else {
        (colors[a] + rng.gen_range(1..k)) % k
    };
    let mut flags = vec![0.0; n];
    flags[a] = 1.0;
    flags[b] = 1.0;
    let mut total = n;
    if spec.mark_with_leaf {
        for anchor in [a, b] {
            pairs.push((anchor, total));
            colors.push(rng.gen_range(0..k));
            flags.push(0.0);
            total += 1;
        }
    }

    let mut perm: Vec<usize> = (0..total).collect();
    perm.shuffle(rng);
    let mut node_feat = vec![Vec::new(); total];
    for old in 0..total {
        let mut row = vec![0.0; 1 + k];
        row[0] = flags[old];
        row[1 + colors[old]] = 1.0;
        node_feat[perm[old]] = row;
    }
    let mut edges = Vec::with_capacity(pairs.len() * 2);
    for (u, v) in pairs {
        edges.push((perm[u], perm[v]));
        edges.push((perm[v], perm[u]));
    }
    let edge_feat = vec![vec![1.0]; edges.len()];
    Graph {
        num_nodes: total,
        edges,
        node_feat,
        edge_feat,
        label: Some(Label::Class(matched as usize)),
    }
}

/// Generates `spec.num_graphs` graphs; graph `i` depends only on `(seed, i)`.
pub fn make_longrange_dataset(spec: &SynthSpec, seed: u64) -> Result<Vec<Graph>> {
    spec.validate()?;
    Ok((0..spec.num_graphs)
        .map(|i| one_graph(spec, &mut stream(seed, &[0x5EED_DA7A, i as u64])))
        .collect())
}
