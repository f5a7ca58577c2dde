//! Central finite-difference gradient checking.

use super::params::ParamStore;
use crate::tensor::Tensor;

/// Worst disagreement found by [`grad_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input index, flat element index, analytic, numeric)` at the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
    pub entries_checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Fourth-order central difference
/// `(f(x−2ε) − 8f(x−ε) + 8f(x+ε) − f(x+2ε)) / 12ε`. Truncation error is
/// `O(ε⁴)`, so a step near 1e-3 keeps both truncation and cancellation
/// error around 1e-12 for O(1) losses.
fn stencil(mut f: impl FnMut(f64) -> f64, orig: f64, eps: f64) -> f64 {
    let (m2, m1) = (f(orig - 2.0 * eps), f(orig - eps));
    let (p1, p2) = (f(orig + eps), f(orig + 2.0 * eps));
    (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * eps)
}

pub const DEFAULT_STEP: f64 = 1e-3;

/// Compares the analytic gradients returned by `f` against central
/// differences for every element of every input.
///
/// `f` maps the inputs to `(scalar loss, gradient per input)`.
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> GradCheckReport
where
    F: Fn(&[Tensor]) -> (f64, Vec<Tensor>),
{
    let (_, analytic) = f(inputs);
    assert_eq!(analytic.len(), inputs.len(), "one gradient per input");
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        entries_checked: 0,
    };
    for i in 0..inputs.len() {
        assert_eq!(analytic[i].shape(), inputs[i].shape(), "gradient {i} shape");
        for j in 0..inputs[i].len() {
            let orig = work[i].data()[j];
            let numeric = stencil(
                |v| {
                    work[i].data_mut()[j] = v;
                    f(&work).0
                },
                orig,
                eps,
            );
            work[i].data_mut()[j] = orig;
            let a = analytic[i].data()[j];
            let err = relative_error(a, numeric);
            report.entries_checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((i, j, a, numeric));
            }
        }
    }
    report
}

/// Gradient check over every scalar of every parameter in `store`.
///
/// `f` must zero the gradients, run forward and backward, and return the
/// loss; the analytic gradients are read back from the store after a call
/// at the unperturbed point.
pub fn grad_check_params<F>(store: &mut ParamStore, mut f: F, eps: f64) -> GradCheckReport
where
    F: FnMut(&mut ParamStore) -> f64,
{
    f(store);
    let analytic = store.grads_snapshot();
    let ids: Vec<_> = store.ids().collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        entries_checked: 0,
    };
    for (pi, &id) in ids.iter().enumerate() {
        if store.is_frozen(id) {
            continue;
        }
        for j in 0..store.value(id).len() {
            let orig = store.value(id)[j];
            let numeric = stencil(
                |v| {
                    store.value_mut(id)[j] = v;
                    f(store)
                },
                orig,
                eps,
            );
            store.value_mut(id)[j] = orig;
            let a = analytic[pi][j];
            let err = relative_error(a, numeric);
            report.entries_checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((pi, j, a, numeric));
            }
        }
    }
    f(store);
    report
}

/// `Σ w ⊙ y`: a scalar probe whose gradient w.r.t. `y` is `w`.
pub fn probe(y: &Tensor, weights: &Tensor) -> f64 {
    y.data()
        .iter()
        .zip(weights.data())
        .map(|(a, b)| a * b)
        .sum()
}
