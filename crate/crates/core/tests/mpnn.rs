use gmamba::mpnn::{GatedGcn, GATE_EPS};
use gmamba::nn::act::sigmoid;
use gmamba::nn::{grad_check, grad_check_params, probe, ParamStore, DEFAULT_STEP};
use gmamba::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const D: usize = 3;

fn build(seed: u64) -> (ParamStore, GatedGcn) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let layer = GatedGcn::new(&mut store, "mp", D, &mut rng);
    for id in layer.param_ids() {
        for v in store.value_mut(id) {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
    (store, layer)
}

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::from_vec(
        &[r, c],
        (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn both_ways(pairs: &[(usize, usize)]) -> Vec<(usize, usize)> {
    pairs.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect()
}

fn lin(store: &ParamStore, name: &str, x: &[f64]) -> Vec<f64> {
    let w = store.value(store.find(&format!("mp.{name}.weight")).unwrap());
    let b = store.value(store.find(&format!("mp.{name}.bias")).unwrap());
    (0..D)
        .map(|o| b[o] + (0..D).map(|i| x[i] * w[i * D + o]).sum::<f64>())
        .collect()
}

/// Dense-adjacency re-implementation: loops over all (i, j) pairs and
/// looks up the edge feature through an index matrix.
fn dense_oracle(
    store: &ParamStore,
    x: &Tensor,
    e: &Tensor,
    edges: &[(usize, usize)],
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let l = x.rows();
    let mut adj = vec![vec![None; l]; l];
    for (k, &(s, t)) in edges.iter().enumerate() {
        adj[t][s] = Some(k);
    }
    let mut e_hat = vec![vec![0.0; D]; edges.len()];
    let mut out = Vec::new();
    let gamma = store.value(store.find("mp.norm.gamma").unwrap());
    let beta = store.value(store.find("mp.norm.beta").unwrap());
    for i in 0..l {
        let mut num = vec![0.0; D];
        let mut den = vec![GATE_EPS; D];
        for j in 0..l {
            if let Some(k) = adj[i][j] {
                let (pi, qj, rk) = (
                    lin(store, "p", x.row(i)),
                    lin(store, "q", x.row(j)),
                    lin(store, "r", e.row(k)),
                );
                let vj = lin(store, "v", x.row(j));
                for c in 0..D {
                    let eh = pi[c] + qj[c] + rk[c];
                    e_hat[k][c] = eh;
                    num[c] += sigmoid(eh) * vj[c];
                    den[c] += sigmoid(eh);
                }
            }
        }
        let ui = lin(store, "u", x.row(i));
        let pre: Vec<f64> = (0..D).map(|c| ui[c] + num[c] / den[c]).collect();
        let mu = pre.iter().sum::<f64>() / D as f64;
        let var = pre.iter().map(|p| (p - mu).powi(2)).sum::<f64>() / D as f64;
        out.push(
            (0..D)
                .map(|c| (gamma[c] * (pre[c] - mu) / (var + 1e-5).sqrt() + beta[c]).max(0.0))
                .collect(),
        );
    }
    (out, e_hat)
}

#[test]
fn matches_dense_oracle() {
    let (store, layer) = build(1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let edges = both_ways(&[(0, 1), (1, 2), (2, 3), (3, 0), (1, 4)]);
    let x = random(&mut rng, 6, D);
    let e = random(&mut rng, edges.len(), D);
    let (xh, eh, _) = layer.forward(&store, &x, &e, &edges).unwrap();
    let (ox, oe) = dense_oracle(&store, &x, &e, &edges);
    for i in 0..6 {
        for c in 0..D {
            assert!((xh.at(i, c) - ox[i][c]).abs() < 1e-12);
        }
    }
    for k in 0..edges.len() {
        for c in 0..D {
            assert!((eh.at(k, c) - oe[k][c]).abs() < 1e-12);
        }
    }
}

#[test]
fn edgeless_graph_uses_self_term_only() {
    let (store, layer) = build(3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&mut rng, 3, D);
    let (xh, eh, _) = layer
        .forward(&store, &x, &Tensor::zeros(&[0, D]), &[])
        .unwrap();
    assert_eq!(eh.rows(), 0);
    let (ox, _) = dense_oracle(&store, &x, &Tensor::zeros(&[0, D]), &[]);
    for i in 0..3 {
        for c in 0..D {
            assert!((xh.at(i, c) - ox[i][c]).abs() < 1e-12);
        }
    }
}

#[test]
fn single_directed_edge_only_feeds_its_target() {
    let (store, layer) = build(5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random(&mut rng, 2, D);
    let e = random(&mut rng, 1, D);
    let (with, _, _) = layer.forward(&store, &x, &e, &[(0, 1)]).unwrap();
    let (without, _, _) = layer
        .forward(&store, &x, &Tensor::zeros(&[0, D]), &[])
        .unwrap();
    assert_eq!(with.row(0), without.row(0));
    assert_ne!(with.row(1), without.row(1));
}

#[test]
fn dangling_edge_is_rejected() {
    let (store, layer) = build(7);
    let x = Tensor::zeros(&[2, D]);
    let err = layer
        .forward(&store, &x, &Tensor::zeros(&[1, D]), &[(0, 2)])
        .err()
        .unwrap();
    assert!(err.to_string().contains("edges"), "{err}");
}

#[test]
fn gates_sum_to_at_most_one() {
    let (store, layer) = build(8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let edges = both_ways(&[(0, 1), (0, 2), (0, 3), (2, 3)]);
    let x = random(&mut rng, 4, D);
    let e = random(&mut rng, edges.len(), D);
    let (_, eh, _) = layer.forward(&store, &x, &e, &edges).unwrap();
    for i in 0..4 {
        for c in 0..D {
            let s: Vec<f64> = edges
                .iter()
                .enumerate()
                .filter(|(_, &(_, t))| t == i)
                .map(|(k, _)| sigmoid(eh.at(k, c)))
                .collect();
            let total: f64 = s.iter().sum();
            let eta: f64 = s.iter().map(|v| v / (total + GATE_EPS)).sum();
            assert!(eta > 0.0 && eta <= 1.0);
        }
    }
}

#[test]
fn relabeling_permutes_outputs_exactly() {
    let (store, layer) = build(10);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let edges = both_ways(&[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3)]);
    let x = random(&mut rng, 5, D);
    let e = random(&mut rng, edges.len(), D);
    let perm = [3, 0, 4, 1, 2];
    let mut xp = Tensor::zeros(&[5, D]);
    for i in 0..5 {
        xp.row_mut(perm[i]).copy_from_slice(x.row(i));
    }
    // relabel nodes and reverse the edge list order
    let order: Vec<usize> = (0..edges.len()).rev().collect();
    let ep = e.gather_rows(&order);
    let edges_p: Vec<(usize, usize)> = order
        .iter()
        .map(|&k| (perm[edges[k].0], perm[edges[k].1]))
        .collect();
    let (a, ea, _) = layer.forward(&store, &x, &e, &edges).unwrap();
    let (b, eb, _) = layer.forward(&store, &xp, &ep, &edges_p).unwrap();
    for i in 0..5 {
        for c in 0..D {
            assert!((a.at(i, c) - b.at(perm[i], c)).abs() < 1e-15);
        }
    }
    for (pos, &k) in order.iter().enumerate() {
        assert_eq!(ea.row(k), eb.row(pos));
    }
}

#[test]
fn output_depends_only_on_in_neighbourhood() {
    let (store, layer) = build(12);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let edges = both_ways(&[(0, 1), (1, 2), (2, 3)]);
    let x = random(&mut rng, 4, D);
    let e = random(&mut rng, edges.len(), D);
    let (base, _, _) = layer.forward(&store, &x, &e, &edges).unwrap();
    let mut far = x.clone();
    far.row_mut(3)[0] += 1.0;
    let (out, _, _) = layer.forward(&store, &far, &e, &edges).unwrap();
    assert_eq!(out.row(0), base.row(0));
    assert_eq!(out.row(1), base.row(1));
    assert_ne!(out.row(2), base.row(2));
}

#[test]
fn gradients_match_finite_differences() {
    let (mut store, layer) = build(14);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    // node 4 is isolated
    let edges = both_ways(&[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]);
    let x = random(&mut rng, 5, D);
    let e = random(&mut rng, edges.len(), D);
    let wx = random(&mut rng, 5, D);
    let we = random(&mut rng, edges.len(), D);

    let report = grad_check_params(
        &mut store,
        |s| {
            s.zero_grads();
            let (xh, eh, cache) = layer.forward(s, &x, &e, &edges).unwrap();
            layer.backward(s, &cache, &wx, &we);
            probe(&xh, &wx) + probe(&eh, &we)
        },
        DEFAULT_STEP,
    );
    assert!(report.max_rel_error < 1e-5, "{report:?}");

    let frozen = store;
    let report = grad_check(
        |inp| {
            let mut scratch = ParamStore::new();
            let mut rng = ChaCha8Rng::seed_from_u64(14);
            let twin = GatedGcn::new(&mut scratch, "mp", D, &mut rng);
            scratch.restore(&frozen.snapshot());
            let (xh, eh, cache) = twin.forward(&scratch, &inp[0], &inp[1], &edges).unwrap();
            let (dx, de) = twin.backward(&mut scratch, &cache, &wx, &we);
            (probe(&xh, &wx) + probe(&eh, &we), vec![dx, de])
        },
        &[x, e],
        DEFAULT_STEP,
    );
    assert!(report.max_rel_error < 1e-5, "{report:?}");
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let (mut store, layer) = build(16);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let edges = both_ways(&[(0, 1), (1, 2)]);
    let x = random(&mut rng, 3, D);
    let e = random(&mut rng, edges.len(), D);
    let (_, _, cache) = layer.forward(&store, &x, &e, &edges).unwrap();
    let (dx, de) = layer.backward(
        &mut store,
        &cache,
        &Tensor::zeros(&[3, D]),
        &Tensor::zeros(&[4, D]),
    );
    assert!(dx.data().iter().chain(de.data()).all(|&v| v == 0.0));
    assert!(store.grads_snapshot().iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn isolated_node_feeds_no_aggregation_parameters() {
    let (mut store, layer) = build(18);
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let edges = both_ways(&[(0, 1)]);
    let x = random(&mut rng, 3, D);
    let e = random(&mut rng, 2, D);
    let (_, _, cache) = layer.forward(&store, &x, &e, &edges).unwrap();
    // upstream gradient only on the isolated node 2
    let mut up = Tensor::zeros(&[3, D]);
    up.row_mut(2).copy_from_slice(&[1.0, -0.5, 0.25]);
    let (dx, _) = layer.backward(&mut store, &cache, &up, &Tensor::zeros(&[2, D]));
    for name in ["v", "p", "q", "r"] {
        for part in ["weight", "bias"] {
            let id = store.find(&format!("mp.{name}.{part}")).unwrap();
            assert!(store.grad(id).iter().all(|&g| g == 0.0), "{name}.{part}");
        }
    }
    assert!(dx.row(0).iter().chain(dx.row(1)).all(|&g| g == 0.0));
}
