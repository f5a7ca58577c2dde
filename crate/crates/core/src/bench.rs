//! Cost accounting: analytic and instrumented forward FLOPs, peak activation
//! memory, a dense-attention comparator and log–log scaling fits.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::graph::{Graph, Label};
use crate::model::{GraphMamba, HeadKind, Mode, ModelConfig, PreparedGraph, StreamKey};
use crate::mpnn::gate_flops;
use crate::nn::act::{RELU_FLOPS, SILU_FLOPS, SOFTPLUS_FLOPS};
use crate::nn::{conv_flops, dropout_flops, layer_norm_flops, linear_flops, ParamStore};
use crate::profile::{self, TRANSCENDENTAL};
use crate::rng::stream;
use crate::ssm::{discretize_flops, scan_flops};

const SUBSAMPLE: u64 = 0x5B5A;
const SIZE_SWEEP: u64 = 0x512E;

/// Per-score softmax cost: exponential, running sum and division.
pub const SOFTMAX_FLOPS: u64 = TRANSCENDENTAL + 2;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleCost {
    pub module: String,
    pub flops: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub modules: Vec<ModuleCost>,
}

impl CostBreakdown {
    fn push(&mut self, module: impl Into<String>, flops: u64) {
        self.modules.push(ModuleCost {
            module: module.into(),
            flops,
        });
    }

    pub fn total(&self) -> u64 {
        self.modules.iter().map(|m| m.flops).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub model: String,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub flops: u64,
    pub peak_bytes: usize,
    pub breakdown: CostBreakdown,
}

/// FLOPs of one selective block on a sequence of `l` nodes.
fn gmb_sequence_flops(cfg: &ModelConfig, l: usize) -> u64 {
    let g = cfg.gmb();
    let (d, di, n) = (g.dim, g.inner(), g.state_dim);
    let delta = match g.delta_projection {
        crate::gmb::DeltaProjection::LowRank => {
            linear_flops(l, di, g.rank()) + linear_flops(l, g.rank(), di)
        }
        crate::gmb::DeltaProjection::Dense => linear_flops(l, di, di),
    };
    layer_norm_flops(l, d)
        + 2 * linear_flops(l, d, di)
        + (l * di) as u64 * SILU_FLOPS
        + conv_flops(l, di, g.conv_kernel)
        + (l * di) as u64 * SILU_FLOPS
        + 2 * linear_flops(l, di, n)
        + delta
        + (l * di) as u64 * SOFTPLUS_FLOPS
        + (di * n) as u64 * (TRANSCENDENTAL + 1)
        + discretize_flops(l, di, n, g.discretization)
        + scan_flops(l, di, n, g.d_skip)
        + (l * di) as u64
        + linear_flops(l, di, d)
}

/// Closed-form forward FLOPs of the full model on a graph with `l` nodes and
/// `e` directed edges. Matches the instrumented count of
/// [`GraphMamba::forward`] exactly.
pub fn analytic_flops(cfg: &ModelConfig, l: usize, e: usize, mode: Mode) -> Result<CostBreakdown> {
    cfg.validate()?;
    if l == 0 {
        return Err(Error::Config("cannot cost an empty graph".into()));
    }
    let d = cfg.hidden_dim;
    let training = mode == Mode::Train;
    let passes = match mode {
        Mode::Train => 1,
        Mode::Eval { m: 0 } => return Err(Error::Config("m_eval must be at least 1".into())),
        Mode::Eval { m } => m,
    };
    let mut b = CostBreakdown::default();
    b.push("encoder.node", linear_flops(l, cfg.node_input_dim(), d));
    b.push("encoder.edge", linear_flops(e, cfg.edge_feat_dim, d));
    let bins = cfg.n_bins.min(l);
    if cfg.n_bins > l {
        return Err(Error::Config(format!(
            "{} bins for {} nodes",
            cfg.n_bins, l
        )));
    }
    for k in 0..cfg.num_layers {
        let mpnn = 4 * linear_flops(l, d, d)
            + linear_flops(e, d, d)
            + gate_flops(l, e, d)
            + layer_norm_flops(l, d)
            + (l * d) as u64 * RELU_FLOPS;
        b.push(format!("layer{k}.mpnn"), mpnn);
        let gmb = if cfg.mpnn_only {
            0
        } else {
            // bins are near-equal chunks; every term but the A recompute is linear in length
            let (q, r) = (l / bins, l % bins);
            let one: u64 = (0..bins)
                .map(|i| gmb_sequence_flops(cfg, q + usize::from(i < r)))
                .sum();
            let avg = if passes > 1 {
                (l * d * passes) as u64
            } else {
                0
            };
            one * passes as u64 + avg
        };
        b.push(format!("layer{k}.gmb"), gmb);
        let drop = dropout_flops(l * d, cfg.dropout, training);
        b.push(
            format!("layer{k}.residual"),
            2 * ((l * d) as u64 + drop) + (l * d) as u64,
        );
        b.push(
            format!("layer{k}.mlp"),
            linear_flops(l, d, 2 * d) + (l * 2 * d) as u64 * RELU_FLOPS + linear_flops(l, 2 * d, d),
        );
    }
    let rows = match cfg.head {
        HeadKind::NodeClass => l,
        HeadKind::GraphClass | HeadKind::GraphRegress => {
            b.push("pool", (l * d) as u64);
            1
        }
    };
    b.push(
        "head",
        linear_flops(rows, d, d)
            + (rows * d) as u64 * RELU_FLOPS
            + linear_flops(rows, d, cfg.num_outputs),
    );
    Ok(b)
}

/// Instrumented training-mode forward of `model` on `pg`: counted FLOPs,
/// the analytic breakdown and the peak of live tensor bytes, which includes
/// every cache retained for the backward pass.
pub fn measure_cost(
    model: &GraphMamba,
    store: &ParamStore,
    pg: &PreparedGraph,
    seed: u64,
) -> Result<CostReport> {
    let key = StreamKey {
        seed,
        epoch: 0,
        graph: 0,
    };
    let (res, peak) = profile::track_peak_memory(|| {
        profile::count_flops_of(|| model.forward(store, pg, Mode::Train, key))
    });
    let (out, flops) = res;
    drop(out?);
    let breakdown = analytic_flops(&model.cfg, pg.num_nodes(), pg.num_edges(), Mode::Train)?;
    Ok(CostReport {
        model: if model.cfg.mpnn_only {
            "mpnn".into()
        } else {
            "graph_mamba".into()
        },
        num_nodes: pg.num_nodes(),
        num_edges: pg.num_edges(),
        flops,
        peak_bytes: peak,
        breakdown,
    })
}

/// One single-head dense attention layer of width `d` over `l` tokens:
/// Q/K/V projections, `QKᵀ`, softmax and the weighted sum. Memory counts the
/// input, Q, K, V, the score and probability matrices and the output.
pub fn dense_attention_cost(l: usize, d: usize) -> CostReport {
    let mut b = CostBreakdown::default();
    b.push("qkv", 3 * linear_flops(l, d, d));
    b.push("scores", 2 * (l * l * d) as u64);
    b.push("softmax", (l * l) as u64 * SOFTMAX_FLOPS);
    b.push("weighted_sum", 2 * (l * l * d) as u64);
    CostReport {
        model: "dense_attention".into(),
        num_nodes: l,
        num_edges: 0,
        flops: b.total(),
        peak_bytes: 8 * (2 * l * l + 5 * l * d),
        breakdown: b,
    }
}

/// Induced subgraph on `⌈ratio·L⌉` nodes drawn uniformly without
/// replacement. Node order, features and per-node labels follow the kept
/// nodes in ascending original index.
pub fn subsample(g: &Graph, ratio: f64, rng: &mut impl Rng) -> Result<Graph> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(format!(
            "subsample ratio must lie in (0, 1], got {ratio}"
        )));
    }
    if g.num_nodes == 0 {
        return Err(Error::InvalidGraph {
            field: "num_nodes",
            detail: "cannot subsample an empty graph".into(),
        });
    }
    let keep = ((ratio * g.num_nodes as f64).ceil() as usize).clamp(1, g.num_nodes);
    let mut kept = sample(rng, g.num_nodes, keep).into_vec();
    kept.sort_unstable();
    let mut new_id = vec![usize::MAX; g.num_nodes];
    for (j, &i) in kept.iter().enumerate() {
        new_id[i] = j;
    }
    let (mut edges, mut edge_feat) = (Vec::new(), Vec::new());
    for (&(s, t), f) in g.edges.iter().zip(&g.edge_feat) {
        if new_id[s] != usize::MAX && new_id[t] != usize::MAX {
            edges.push((new_id[s], new_id[t]));
            edge_feat.push(f.clone());
        }
    }
    let label = match &g.label {
        Some(Label::NodeClasses(ys)) => {
            Some(Label::NodeClasses(kept.iter().map(|&i| ys[i]).collect()))
        }
        other => other.clone(),
    };
    Graph::new(
        keep,
        edges,
        kept.iter().map(|&i| g.node_feat[i].clone()).collect(),
        edge_feat,
        label,
    )
}

/// Ring lattice on `l` nodes where each node links to its `half_degree`
/// nearest neighbours on either side, with random node features.
pub fn ring_lattice(
    l: usize,
    half_degree: usize,
    node_feat_dim: usize,
    edge_feat_dim: usize,
    seed: u64,
) -> Result<Graph> {
    if l < 2 * half_degree + 1 {
        return Err(Error::Config(format!(
            "{l} nodes cannot hold degree {}",
            2 * half_degree
        )));
    }
    let mut rng = stream(seed, &[SIZE_SWEEP, l as u64]);
    let mut edges = Vec::with_capacity(2 * l * half_degree);
    for i in 0..l {
        for k in 1..=half_degree {
            let j = (i + k) % l;
            edges.push((i, j));
            edges.push((j, i));
        }
    }
    let node_feat = (0..l)
        .map(|_| {
            (0..node_feat_dim)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect()
        })
        .collect();
    let edge_feat = vec![vec![1.0; edge_feat_dim]; edges.len()];
    Graph::new(l, edges, node_feat, edge_feat, None)
}

/// Least-squares line through `(ln x, ln y)` with a 95% interval on the slope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci95: (f64, f64),
    pub points: usize,
}

pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 paired points, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Fit(
            "log–log fit needs positive finite values".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx < 1e-12 {
        return Err(Error::Fit("all x values coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let se = (sse / (n - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, n - 2.0)
        .map_err(|e| Error::Fit(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(SlopeFit {
        slope,
        intercept,
        ci95: (slope - t * se, slope + t * se),
        points: xs.len(),
    })
}

/// Averages at one subsampling ratio (or one graph size).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub ratio: f64,
    pub avg_nodes: f64,
    pub flops: f64,
    pub peak_bytes: f64,
    pub model: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub points: Vec<ScalingPoint>,
    pub flops_slope: SlopeFit,
    pub memory_slope: SlopeFit,
    pub dense_flops_slope: SlopeFit,
    pub dense_memory_slope: SlopeFit,
}

fn fit_points(points: Vec<ScalingPoint>, model: &str) -> Result<ScalingResult> {
    let pick = |name: &str, f: fn(&ScalingPoint) -> f64| -> (Vec<f64>, Vec<f64>) {
        points
            .iter()
            .filter(|p| p.model == name)
            .map(|p| (p.avg_nodes, f(p)))
            .unzip()
    };
    let (x, fl) = pick(model, |p| p.flops);
    let (_, mem) = pick(model, |p| p.peak_bytes);
    let (dx, dfl) = pick("dense_attention", |p| p.flops);
    let (_, dmem) = pick("dense_attention", |p| p.peak_bytes);
    Ok(ScalingResult {
        flops_slope: loglog_fit(&x, &fl)?,
        memory_slope: loglog_fit(&x, &mem)?,
        dense_flops_slope: loglog_fit(&dx, &dfl)?,
        dense_memory_slope: loglog_fit(&dx, &dmem)?,
        points,
    })
}

fn cost_group(
    model: &GraphMamba,
    store: &ParamStore,
    graphs: &[Graph],
    ratio: f64,
    seed: u64,
    points: &mut Vec<ScalingPoint>,
) -> Result<()> {
    let (mut nodes, mut fl, mut mem, mut dfl, mut dmem) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for g in graphs {
        let pg = PreparedGraph::new(g, &model.cfg)?;
        let c = measure_cost(model, store, &pg, seed)?;
        let dense = dense_attention_cost(pg.num_nodes(), model.cfg.hidden_dim);
        nodes += pg.num_nodes() as f64;
        fl += c.flops as f64;
        mem += c.peak_bytes as f64;
        dfl += dense.flops as f64;
        dmem += dense.peak_bytes as f64;
    }
    let n = graphs.len() as f64;
    let name = if model.cfg.mpnn_only {
        "mpnn"
    } else {
        "graph_mamba"
    };
    for (m, f, b) in [(name, fl, mem), ("dense_attention", dfl, dmem)] {
        points.push(ScalingPoint {
            ratio,
            avg_nodes: nodes / n,
            flops: f / n,
            peak_bytes: b / n,
            model: m.into(),
        });
    }
    Ok(())
}

/// Subsamples every graph of `dataset` at each ratio, measures the model and
/// the dense comparator on the results and fits log–log slopes against the
/// mean node count.
pub fn scaling_experiment(
    model_cfg: &ModelConfig,
    dataset: &[Graph],
    ratios: &[f64],
    seed: u64,
) -> Result<ScalingResult> {
    if ratios.len() < 5 {
        return Err(Error::Config(format!(
            "need at least 5 ratios, got {}",
            ratios.len()
        )));
    }
    if dataset.is_empty() {
        return Err(Error::Config("empty dataset".into()));
    }
    let mut store = ParamStore::new();
    let model = GraphMamba::new(model_cfg.clone(), &mut store, seed)?;
    let mut points = Vec::new();
    for (ri, &ratio) in ratios.iter().enumerate() {
        let subs = dataset
            .iter()
            .enumerate()
            .map(|(gi, g)| {
                subsample(
                    g,
                    ratio,
                    &mut stream(seed, &[SUBSAMPLE, ri as u64, gi as u64]),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        cost_group(&model, &store, &subs, ratio, seed, &mut points)?;
    }
    let name = points[0].model.clone();
    fit_points(points, &name)
}

/// Measures one graph per entry of `graphs` (typically constant-degree
/// graphs of growing size) and fits slopes against node count.
pub fn size_sweep(model_cfg: &ModelConfig, graphs: &[Graph], seed: u64) -> Result<ScalingResult> {
    let mut store = ParamStore::new();
    let model = GraphMamba::new(model_cfg.clone(), &mut store, seed)?;
    let mut points = Vec::new();
    for g in graphs {
        cost_group(
            &model,
            &store,
            std::slice::from_ref(g),
            1.0,
            seed,
            &mut points,
        )?;
    }
    let name = if model_cfg.mpnn_only {
        "mpnn"
    } else {
        "graph_mamba"
    };
    fit_points(points, name)
}
