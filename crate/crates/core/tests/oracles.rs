//! Cross-checks against nalgebra's eigensolver and property tests for the
//! scan and ordering invariants.

use gmamba::gmb::make_sort_plan;
use gmamba::graph::{eigenvector_centrality, laplacian_pe, node_degrees, symmetric_eigen, Graph};
use gmamba::ssm::{
    associative_scan_fwd, discretize, selective_scan_fwd, Discretization, ScanInputs,
};
use gmamba::Tensor;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn random_symmetric(n: usize, seed: u64) -> Vec<f64> {
    let mut state = seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    let mut next = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = next();
            m[i * n + j] = v;
            m[j * n + i] = v;
        }
    }
    m
}

#[test]
fn jacobi_eigenvalues_match_nalgebra() {
    for (n, seed) in [(1, 0), (2, 1), (5, 2), (9, 3), (16, 4)] {
        let m = random_symmetric(n, seed);
        let (values, vectors) = symmetric_eigen(n, &m);
        let mut want: Vec<f64> = SymmetricEigen::new(DMatrix::from_row_slice(n, n, &m))
            .eigenvalues
            .iter()
            .copied()
            .collect();
        want.sort_by(f64::total_cmp);
        for (a, b) in values.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10, "n={n}: {a} vs {b}");
        }
        // columns satisfy M v = λ v
        let mm = DMatrix::from_row_slice(n, n, &m);
        let vv = DMatrix::from_row_slice(n, n, &vectors);
        for c in 0..n {
            let r = &mm * vv.column(c) - vv.column(c) * values[c];
            assert!(r.norm() < 1e-9, "n={n} col {c}: residual {}", r.norm());
        }
    }
}

fn path_with_chord() -> Graph {
    Graph::undirected(7, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (1, 5)]).unwrap()
}

#[test]
fn centrality_matches_principal_eigenvector() {
    let g = path_with_chord();
    let n = g.num_nodes;
    let mut adj = DMatrix::zeros(n, n);
    for &(s, t) in &g.edges {
        adj[(s, t)] = 1.0;
    }
    let eig = SymmetricEigen::new(adj);
    let top = eig.eigenvalues.imax();
    let mut v: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let got = eigenvector_centrality(&g, 1e-12, 10_000).unwrap();
    for (a, b) in got.iter().zip(&v) {
        assert!((a - b).abs() < 1e-8, "{got:?} vs {v:?}");
    }
}

#[test]
fn laplacian_pe_spans_nalgebra_eigenvectors() {
    let g = path_with_chord();
    let n = g.num_nodes;
    let deg = node_degrees(&g);
    let mut lap = DMatrix::<f64>::identity(n, n);
    for &(s, t) in &g.edges {
        lap[(s, t)] -= 1.0 / (deg[s] * deg[t]).sqrt();
    }
    let eig: SymmetricEigen<f64, nalgebra::Dyn> = SymmetricEigen::new(lap.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let pe = laplacian_pe(&g, 3).unwrap();
    for (col, &src) in order[1..4].iter().enumerate() {
        let want = eig.eigenvectors.column(src);
        let got = nalgebra::DVector::from_iterator(n, pe.iter().map(|row| row[col]));
        // eigenvalues of this graph are simple, so columns agree up to sign
        let cos = got.dot(&want).abs();
        assert!((cos - 1.0).abs() < 1e-9, "column {col}: |cos| = {cos}");
        let lambda = eig.eigenvalues[src];
        assert!((&lap * &got - &got * lambda).norm() < 1e-9);
    }
}

fn scan_case() -> impl Strategy<Value = (ScanInputs, Vec<f64>)> {
    (1usize..24, 1usize..4, 1usize..4).prop_flat_map(|(l, d, n)| {
        (
            prop::collection::vec(-1.0f64..1.0, l * d),
            prop::collection::vec(0.01f64..1.5, l * d),
            prop::collection::vec(-1.0f64..1.0, l * n),
            prop::collection::vec(-1.0f64..1.0, l * n),
            prop::collection::vec(-4.0f64..-0.05, d * n),
        )
            .prop_map(move |(x, dt, b, c, a)| {
                let inputs = ScanInputs {
                    x: Tensor::matrix(l, d, x).unwrap(),
                    delta: Tensor::matrix(l, d, dt).unwrap(),
                    b: Tensor::matrix(l, n, b).unwrap(),
                    c: Tensor::matrix(l, n, c).unwrap(),
                };
                (inputs, a)
            })
    })
}

proptest! {
    #[test]
    fn associative_scan_matches_sequential((inputs, a) in scan_case()) {
        for kind in [Discretization::Zoh, Discretization::Simplified] {
            let disc = discretize(&inputs.delta, &a, &inputs.b, kind).unwrap();
            let seq = selective_scan_fwd(&inputs, &disc, None);
            let par = associative_scan_fwd(&inputs, &disc, None);
            prop_assert!(seq.y.max_abs_diff(&par.y) < 1e-10);
        }
    }

    #[test]
    fn sort_plan_round_trips(h in prop::collection::vec(0u8..5, 1..80)) {
        let h: Vec<f64> = h.into_iter().map(f64::from).collect();
        let plan = make_sort_plan(&h);
        let l = h.len();
        prop_assert!(plan.sorted.windows(2).all(|w| h[w[0]] < h[w[1]] || (h[w[0]] == h[w[1]] && w[0] < w[1])));
        for i in 0..l {
            prop_assert_eq!(plan.sorted[plan.reverse[i]], i);
        }
    }
}
