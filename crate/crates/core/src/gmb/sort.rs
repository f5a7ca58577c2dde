use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Forward and inverse orderings of one sequence.
///
/// `sorted[p]` is the node placed at sequence position `p`; `reverse[i]` is
/// the position of node `i`, so `reverse[sorted[p]] == p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SortPlan {
    pub sorted: Vec<usize>,
    pub reverse: Vec<usize>,
}

impl SortPlan {
    pub fn identity(l: usize) -> Self {
        SortPlan {
            sorted: (0..l).collect(),
            reverse: (0..l).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }
}

fn argsort_by<T>(keys: &[T], cmp: impl Fn(&T, &T) -> std::cmp::Ordering) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| cmp(&keys[a], &keys[b]));
    idx
}

/// Stable ascending argsort of the (jittered) heuristic and its inverse.
pub fn make_sort_plan(h: &[f64]) -> SortPlan {
    let sorted = argsort_by(h, |a, b| a.total_cmp(b));
    let reverse = argsort_by(&sorted, |a, b| a.cmp(b));
    SortPlan { sorted, reverse }
}

/// `H + U[0,1)` per node. With `noise` off the heuristic is returned
/// unchanged and `rng` is not touched.
pub fn jitter_heuristic(h: &[f64], noise: bool, rng: &mut impl Rng) -> Vec<f64> {
    if !noise {
        return h.to_vec();
    }
    h.iter().map(|v| v + rng.gen::<f64>()).collect()
}

/// Random partition of `0..l` into `n` contiguous chunks of a shuffled
/// index list; chunk sizes differ by at most one. A single bin is the
/// identity order and draws nothing from `rng`.
pub fn random_bins(l: usize, n: usize, rng: &mut impl Rng) -> Result<Vec<Vec<usize>>> {
    if n == 0 || n > l.max(1) {
        return Err(Error::Config(format!(
            "n_bins must lie in [1, L] but is {n} for L = {l}"
        )));
    }
    let mut order: Vec<usize> = (0..l).collect();
    if n == 1 {
        return Ok(vec![order]);
    }
    order.shuffle(rng);
    let (base, extra) = (l / n, l % n);
    let mut bins = Vec::with_capacity(n);
    let mut start = 0;
    for b in 0..n {
        let size = base + usize::from(b < extra);
        bins.push(order[start..start + size].to_vec());
        start += size;
    }
    Ok(bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_computed_plan() {
        let plan = make_sort_plan(&[2.1, 0.3, 1.5]);
        assert_eq!(plan.sorted, vec![1, 2, 0]);
        assert_eq!(plan.reverse, vec![2, 0, 1]);
        assert_eq!(make_sort_plan(&[0.0, 1.0, 2.5]), SortPlan::identity(3));
    }

    #[test]
    fn gather_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::from_vec(&[7, 3], (0..21).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let h: Vec<f64> = (0..7).map(|_| rng.gen::<f64>()).collect();
        let plan = make_sort_plan(&h);
        assert_eq!(x.gather_rows(&plan.sorted).gather_rows(&plan.reverse), x);
    }

    #[test]
    fn jitter_never_crosses_integer_gaps() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut first_two = [0usize; 3];
        for _ in 0..200 {
            let plan = make_sort_plan(&jitter_heuristic(&[3.0, 1.0, 1.0], true, &mut rng));
            assert_eq!(plan.sorted[2], 0);
            first_two[plan.sorted[0]] += 1;
        }
        assert!(first_two[1] > 50 && first_two[2] > 50);
    }

    #[test]
    fn constant_heuristic_gives_uniform_orders() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = std::collections::HashMap::new();
        let draws = 10_000;
        for _ in 0..draws {
            let plan = make_sort_plan(&jitter_heuristic(&[0.0; 3], true, &mut rng));
            *counts.entry(plan.sorted).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        let expected = draws as f64 / 6.0;
        let chi2: f64 = counts
            .values()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 0.99 quantile of χ² with 5 degrees of freedom
        assert!(chi2 < 15.086, "χ² = {chi2}");
    }

    #[test]
    fn disabled_noise_is_identity_without_draws() {
        let mut rng = crate::rng::CountingRng::new(0);
        assert_eq!(
            jitter_heuristic(&[1.0, 2.0], false, &mut rng),
            vec![1.0, 2.0]
        );
        assert_eq!(rng.calls(), 0);
    }

    #[test]
    fn bins_partition_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let bins = random_bins(10, 4, &mut rng).unwrap();
        let sizes: Vec<usize> = bins.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 3, 2, 2]);
        let mut all: Vec<usize> = bins.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(random_bins(3, 4, &mut rng).is_err());
        assert_eq!(random_bins(5, 5, &mut rng).unwrap().len(), 5);
    }
}
