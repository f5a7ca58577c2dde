use super::{node_degrees, Graph};
use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric `n×n` row-major matrix by cyclic
/// Jacobi rotations. Returns eigenvalues in ascending order and the matching
/// eigenvectors as columns of a row-major `n×n` matrix.
pub fn symmetric_eigen(n: usize, matrix: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(matrix.len(), n * n);
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[r * n + col] = v[r * n + src];
        }
    }
    (values, vectors)
}

const ZERO_EIGENVALUE: f64 = 1e-8;

/// Laplacian positional encoding: eigenvectors of the symmetric normalized
/// Laplacian `I - D^-1/2 A D^-1/2` for the `k` smallest nonzero eigenvalues,
/// returned as `L` rows of `k` entries.
///
/// Columns are unit-norm with the largest-magnitude entry made positive.
/// When the graph has fewer than `k` nonzero eigenvalues the remaining
/// columns are zero. Isolated nodes get a zero Laplacian row.
pub fn laplacian_pe(g: &Graph, k: usize) -> Result<Vec<Vec<f64>>> {
    let n = g.num_nodes;
    if k > 0 && k >= n {
        return Err(Error::Config(format!(
            "Laplacian PE needs k < num_nodes, got k = {k} for {n} nodes"
        )));
    }
    if k == 0 {
        return Ok(vec![Vec::new(); n]);
    }
    let deg = node_degrees(g);
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut lap = vec![0.0; n * n];
    for i in 0..n {
        if deg[i] > 0.0 {
            lap[i * n + i] = 1.0;
        }
    }
    for (i, nb) in g.undirected_neighbors().iter().enumerate() {
        for &j in nb {
            lap[i * n + j] -= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let (values, vectors) = symmetric_eigen(n, &lap);
    let picked: Vec<usize> = (0..n)
        .filter(|&i| values[i] > ZERO_EIGENVALUE)
        .take(k)
        .collect();
    let mut pe = vec![vec![0.0; k]; n];
    for (col, &src) in picked.iter().enumerate() {
        let mut column: Vec<f64> = (0..n).map(|r| vectors[r * n + src]).collect();
        let norm = column.iter().map(|v| v * v).sum::<f64>().sqrt();
        let pivot = column
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, &v)| {
                if v.abs() > best.1.abs() {
                    (i, v)
                } else {
                    best
                }
            })
            .1;
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        column.iter_mut().for_each(|v| *v *= sign / norm);
        for r in 0..n {
            pe[r][col] = column[r];
        }
    }
    Ok(pe)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_diagonalizes_2x2() {
        let (vals, vecs) = symmetric_eigen(2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((vals[0] - 1.0).abs() < 1e-14 && (vals[1] - 3.0).abs() < 1e-14);
        assert!((vecs[0].abs() - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn k_zero_gives_empty_columns() {
        let g = Graph::undirected(3, &[(0, 1), (1, 2)]).unwrap();
        let pe = laplacian_pe(&g, 0).unwrap();
        assert_eq!(pe.len(), 3);
        assert!(pe.iter().all(Vec::is_empty));
    }

    #[test]
    fn k_at_least_l_is_rejected() {
        let g = Graph::undirected(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(matches!(laplacian_pe(&g, 3), Err(Error::Config(_))));
    }

    #[test]
    fn null_space_vector_is_excluded() {
        // The zero eigenvector of a connected graph is proportional to
        // sqrt(degree); every returned column must be orthogonal to it.
        let g = Graph::undirected(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)]).unwrap();
        let deg = node_degrees(&g);
        let pe = laplacian_pe(&g, 3).unwrap();
        for c in 0..3 {
            let dot: f64 = (0..5).map(|r| pe[r][c] * deg[r].sqrt()).sum();
            assert!(dot.abs() < 1e-10);
        }
    }
}
