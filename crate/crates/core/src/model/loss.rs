use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Softmax cross-entropy averaged over rows; returns the loss and
/// `(softmax − onehot) / rows`.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (n, c) = (logits.rows(), logits.cols());
    if labels.len() != n {
        return Err(Error::Label(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::Label(format!(
            "class {bad} out of range for {c} outputs"
        )));
    }
    let mut grad = Tensor::zeros(&[n, c]);
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[y];
        let g = grad.row_mut(i);
        for k in 0..c {
            g[k] = (row[k] - log_z).exp() / n as f64;
        }
        g[y] -= 1.0 / n as f64;
    }
    Ok((loss / n as f64, grad))
}

/// Mean absolute error over all entries with the sign subgradient
/// (zero at exact agreement).
pub fn mean_absolute_error(pred: &Tensor, target: &[f64]) -> Result<(f64, Tensor)> {
    if pred.len() != target.len() {
        return Err(Error::Label(format!(
            "{} regression targets for {} outputs",
            target.len(),
            pred.len()
        )));
    }
    let n = pred.len().max(1) as f64;
    let loss = pred
        .data()
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / n;
    let grad = pred
        .data()
        .iter()
        .zip(target)
        .map(|(p, t)| {
            if p > t {
                1.0 / n
            } else if p < t {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    Ok((loss, Tensor::from_vec(pred.shape(), grad)?))
}

/// Index of the largest entry in each row.
pub fn argmax_rows(x: &Tensor) -> Vec<usize> {
    (0..x.rows())
        .map(|i| {
            x.row(i)
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, &v)| {
                    if v > best.1 {
                        (k, v)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, DEFAULT_STEP};

    #[test]
    fn uniform_logits_give_log_c() {
        let (loss, _) = cross_entropy(&Tensor::zeros(&[3, 5]), &[0, 4, 2]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let logits = Tensor::matrix(2, 3, vec![0.3, -1.2, 2.0, 0.0, 0.5, -0.5]).unwrap();
        let labels = [2, 0];
        let report = grad_check(
            |x| {
                let (l, g) = cross_entropy(&x[0], &labels).unwrap();
                (l, vec![g])
            },
            &[logits],
            DEFAULT_STEP,
        );
        assert!(report.max_rel_error < 1e-7, "{report:?}");
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        assert!(matches!(
            cross_entropy(&Tensor::zeros(&[1, 2]), &[2]),
            Err(Error::Label(_))
        ));
    }

    #[test]
    fn exact_prediction_has_zero_mae() {
        let p = Tensor::matrix(1, 3, vec![1.0, -2.0, 0.5]).unwrap();
        let (loss, grad) = mean_absolute_error(&p, &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
        let (loss, grad) = mean_absolute_error(&p, &[0.0, 0.0, 0.0]).unwrap();
        assert!((loss - 3.5 / 3.0).abs() < 1e-15);
        assert_eq!(grad.data(), &[1.0 / 3.0, -1.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        let x = Tensor::matrix(2, 3, vec![1.0, 3.0, 3.0, -1.0, -2.0, -3.0]).unwrap();
        assert_eq!(argmax_rows(&x), vec![1, 0]);
    }
}
