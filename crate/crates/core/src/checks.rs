//! Self-checks run by the command-line tool: the gated-recurrence identity,
//! scan equivalence and finite-difference gradient checks per module.

use std::cell::RefCell;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{Graph, Label};
use crate::model::{GraphMamba, Mode, ModelConfig, PreparedGraph, StreamKey};
use crate::mpnn::GatedGcn;
use crate::nn::act::{silu_backward, silu_forward, softplus, softplus_backward, softplus_forward};
use crate::nn::DEFAULT_STEP;
use crate::nn::{
    grad_check, grad_check_params, probe, CausalConv, GradCheckReport, LayerNorm, Linear,
    ParamStore,
};
use crate::ssm::{
    a_from_log, associative_scan_fwd, discretize, gated_rnn_reference, s4d_real_a_log,
    selective_scan_bwd, selective_scan_fwd, Discretization, ScanInputs,
};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    /// Worst error observed (absolute or relative, per check).
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub seconds: f64,
}

impl CheckResult {
    fn new(name: &str, value: f64, tolerance: f64, start: Instant) -> Self {
        CheckResult {
            name: name.into(),
            value,
            tolerance,
            passed: value < tolerance,
            seconds: start.elapsed().as_secs_f64(),
        }
    }
}

fn random(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).expect("shape")
}

/// One-state scan with `A = −1`, `B = C = 1`, `Δ = softplus(z)` against the
/// gated recurrence `h_t = (1 − σ(z_t)) h_{t−1} + σ(z_t) x_t`; reports the max
/// absolute difference over `cases` random sequences of length ≤ `max_len`.
pub fn theorem_check(cases: usize, max_len: usize, seed: u64) -> Result<CheckResult> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let l = rng.gen_range(1..=max_len.max(1));
        let x: Vec<f64> = (0..l).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let z: Vec<f64> = (0..l).map(|_| rng.gen_range(-6.0..6.0)).collect();
        let inputs = ScanInputs {
            x: Tensor::matrix(l, 1, x.clone())?,
            delta: Tensor::matrix(l, 1, z.iter().map(|&v| softplus(v)).collect())?,
            b: Tensor::full(&[l, 1], 1.0),
            c: Tensor::full(&[l, 1], 1.0),
        };
        let disc = discretize(&inputs.delta, &[-1.0], &inputs.b, Discretization::Zoh)?;
        let y = selective_scan_fwd(&inputs, &disc, None).y;
        for (a, b) in y.data().iter().zip(gated_rnn_reference(&x, &z)) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(CheckResult::new("theorem", worst, 1e-12, start))
}

/// Sequential against associative scan on random inputs with skip term.
pub fn scan_equivalence_check(cases: usize, seed: u64) -> Result<CheckResult> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let (l, d, n) = (
            rng.gen_range(1..48),
            rng.gen_range(1..5),
            rng.gen_range(1..6),
        );
        let inputs = ScanInputs {
            x: random(&mut rng, &[l, d], -1.0, 1.0),
            delta: random(&mut rng, &[l, d], 0.01, 1.0),
            b: random(&mut rng, &[l, n], -1.0, 1.0),
            c: random(&mut rng, &[l, n], -1.0, 1.0),
        };
        let a = a_from_log(&s4d_real_a_log(d, n));
        let skip: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let disc = discretize(&inputs.delta, &a, &inputs.b, Discretization::Zoh)?;
        let seq = selective_scan_fwd(&inputs, &disc, Some(&skip));
        let par = associative_scan_fwd(&inputs, &disc, Some(&skip));
        worst = worst.max(seq.y.max_abs_diff(&par.y));
    }
    Ok(CheckResult::new("scan_equivalence", worst, 1e-10, start))
}

fn perturb(store: &mut ParamStore, rng: &mut impl Rng) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for v in store.value_mut(id) {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
}

fn worse(a: GradCheckReport, b: GradCheckReport) -> f64 {
    a.max_rel_error.max(b.max_rel_error)
}

/// Parameters and input of a layer `fwd` whose backward returns `dx`.
fn layer_check(
    store: ParamStore,
    x: Tensor,
    w: &Tensor,
    run: impl Fn(&mut ParamStore, &Tensor, &Tensor) -> (f64, Tensor),
) -> f64 {
    let store = RefCell::new(store);
    let params = grad_check_params(
        &mut store.borrow_mut(),
        |s| {
            s.zero_grads();
            run(s, &x, w).0
        },
        DEFAULT_STEP,
    );
    let input = grad_check(
        |inp| {
            let mut s = store.borrow_mut();
            let (loss, dx) = run(&mut s, &inp[0], w);
            (loss, vec![dx])
        },
        &[x.clone()],
        DEFAULT_STEP,
    );
    worse(params, input)
}

/// Finite-difference checks for each differentiable module and for the
/// full model on a 5-node graph.
pub fn gradient_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let start = Instant::now();
    let mut store = ParamStore::new();
    let lin = Linear::new(&mut store, "lin", 4, 3, true, &mut rng);
    let (x, w) = (
        random(&mut rng, &[5, 4], -1.0, 1.0),
        random(&mut rng, &[5, 3], -1.0, 1.0),
    );
    let err = layer_check(store, x, &w, |s, x, w| {
        let y = lin.forward(s, x).expect("shape");
        (probe(&y, w), lin.backward(s, x, w))
    });
    out.push(CheckResult::new("linear", err, 1e-5, start));

    let start = Instant::now();
    let mut store = ParamStore::new();
    let ln = LayerNorm::new(&mut store, "ln", 5);
    perturb(&mut store, &mut rng);
    let (x, w) = (
        random(&mut rng, &[4, 5], -2.0, 2.0),
        random(&mut rng, &[4, 5], -1.0, 1.0),
    );
    let err = layer_check(store, x, &w, |s, x, w| {
        let (y, cache) = ln.forward(s, x).expect("shape");
        (probe(&y, w), ln.backward(s, &cache, w))
    });
    out.push(CheckResult::new("layer_norm", err, 1e-5, start));

    for (name, fwd, bwd) in [
        (
            "silu",
            silu_forward as fn(&Tensor) -> Tensor,
            silu_backward as fn(&Tensor, &Tensor) -> Tensor,
        ),
        ("softplus", softplus_forward, softplus_backward),
    ] {
        let start = Instant::now();
        let (x, w) = (
            random(&mut rng, &[6, 3], -4.0, 4.0),
            random(&mut rng, &[6, 3], -1.0, 1.0),
        );
        let report = grad_check(
            |inp| (probe(&fwd(&inp[0]), &w), vec![bwd(&inp[0], &w)]),
            &[x],
            DEFAULT_STEP,
        );
        out.push(CheckResult::new(name, report.max_rel_error, 1e-5, start));
    }

    let start = Instant::now();
    let mut store = ParamStore::new();
    let conv = CausalConv::new(&mut store, "conv", 3, 4, &mut rng);
    let (x, w) = (
        random(&mut rng, &[7, 3], -1.0, 1.0),
        random(&mut rng, &[7, 3], -1.0, 1.0),
    );
    let err = layer_check(store, x, &w, |s, x, w| {
        let y = conv.forward(s, x).expect("shape");
        (probe(&y, w), conv.backward(s, x, w))
    });
    out.push(CheckResult::new("conv", err, 1e-5, start));

    let start = Instant::now();
    out.push(CheckResult::new(
        "scan",
        scan_gradients(&mut rng)?,
        1e-5,
        start,
    ));

    let start = Instant::now();
    let mut store = ParamStore::new();
    let gcn = GatedGcn::new(&mut store, "mp", 3, &mut rng);
    perturb(&mut store, &mut rng);
    let edges = vec![(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2), (0, 3)];
    // redraw until every ReLU input is clear of the kink and no channel is
    // dead everywhere; a dead channel has an exactly zero gradient that the
    // relative-error floor cannot separate from rounding noise
    let (x, e, w, we) = loop {
        let x = random(&mut rng, &[4, 3], -1.0, 1.0);
        let e = random(&mut rng, &[edges.len(), 3], -1.0, 1.0);
        let w = random(&mut rng, &[4, 3], -1.0, 1.0);
        let we = random(&mut rng, &[edges.len(), 3], -1.0, 1.0);
        store.zero_grads();
        let (_, _, cache) = gcn.forward(&store, &x, &e, &edges)?;
        gcn.backward(&mut store, &cache, &w, &we);
        let live = store.grads_snapshot().iter().flatten().all(|g| *g != 0.0);
        if live && cache.relu_margin() > 0.05 {
            break (x, e, w, we);
        }
    };
    let err = layer_check(store, x, &w, |s, x, w| {
        let (xh, eh, cache) = gcn.forward(s, x, &e, &edges).expect("valid graph");
        let (dx, _) = gcn.backward(s, &cache, w, &we);
        (probe(&xh, w) + probe(&eh, &we), dx)
    });
    out.push(CheckResult::new("gated_gcn", err, 1e-5, start));

    let start = Instant::now();
    out.push(CheckResult::new(
        "full_model",
        full_model_gradients(&mut rng)?,
        1e-4,
        start,
    ));
    Ok(out)
}

/// Scan gradients with respect to `x`, `Δ`, `B`, `C`, `A_log` and the skip term.
fn scan_gradients(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (l, d, n) = (6, 2, 3);
    let inputs = vec![
        random(rng, &[l, d], -1.0, 1.0),
        random(rng, &[l, d], 0.05, 0.8),
        random(rng, &[l, n], -1.0, 1.0),
        random(rng, &[l, n], -1.0, 1.0),
        random(rng, &[d, n], -0.5, 1.0),
        random(rng, &[d], -1.0, 1.0),
    ];
    let w = random(rng, &[l, d], -1.0, 1.0);
    let report = grad_check(
        |t| {
            let scan_in = ScanInputs {
                x: t[0].clone(),
                delta: t[1].clone(),
                b: t[2].clone(),
                c: t[3].clone(),
            };
            let a = a_from_log(t[4].data());
            let disc =
                discretize(&scan_in.delta, &a, &scan_in.b, Discretization::Zoh).expect("valid");
            let out = selective_scan_fwd(&scan_in, &disc, Some(t[5].data()));
            let g = selective_scan_bwd(&scan_in, &disc, &out, &a, Some(t[5].data()), &w);
            let loss = probe(&out.y, &w);
            let grads = vec![
                g.dx,
                g.ddelta,
                g.db,
                g.dc,
                Tensor::from_vec(&[d, n], g.da_log).expect("shape"),
                Tensor::from_vec(&[d], g.dd_skip.expect("skip on")).expect("shape"),
            ];
            (loss, grads)
        },
        &inputs,
        DEFAULT_STEP,
    );
    Ok(report.max_rel_error)
}

fn full_model_gradients(rng: &mut ChaCha8Rng) -> Result<f64> {
    let cfg = ModelConfig {
        num_layers: 2,
        hidden_dim: 4,
        node_feat_dim: 2,
        pe_dim: 2,
        state_dim: 2,
        conv_kernel: 2,
        dt_rank: Some(2),
        m_eval: 1,
        ..ModelConfig::default()
    };
    let g0 = Graph::undirected(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)])?;
    // redraw until every ReLU input sits well clear of its kink
    let (mut store, model, pg, key) = loop {
        let mut g = g0.clone();
        g.node_feat = (0..5)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        g.edge_feat = (0..g.num_edges())
            .map(|_| vec![rng.gen_range(-1.0..1.0)])
            .collect();
        g.label = Some(Label::Class(1));
        let mut store = ParamStore::new();
        let model = GraphMamba::new(cfg.clone(), &mut store, rng.gen())?;
        let pg = PreparedGraph::new(&g, &cfg)?;
        let key = StreamKey {
            seed: rng.gen(),
            epoch: 0,
            graph: 0,
        };
        if model
            .forward(&store, &pg, Mode::Train, key)?
            .1
            .relu_margin()
            > 0.02
        {
            break (store, model, pg, key);
        }
    };
    let report = grad_check_params(
        &mut store,
        |s| {
            s.zero_grads();
            model.train_step(s, &pg, key).expect("valid label")
        },
        DEFAULT_STEP,
    );
    Ok(report.max_rel_error)
}
