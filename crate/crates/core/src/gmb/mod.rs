//! Graph Mamba block (GMB): heuristic ordering of nodes, a selective SSM over the
//! ordered sequence, and restoration of the original node order.

mod block;
mod sort;

pub use block::{
    DeltaProjection, GmbConfig, GmbTrace, GraphMambaBlock, PassOptions, Segment, SequenceCache,
};
pub use sort::{jitter_heuristic, make_sort_plan, random_bins, SortPlan};
