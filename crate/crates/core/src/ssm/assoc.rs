//! Parallel-prefix evaluation of the scan.
//!
//! Each step is the affine map `h ↦ a·h + b`; composing step 1 then step 2
//! gives `(a₂a₁, a₂b₁ + b₂)`, an associative operation, so all prefixes can
//! be formed by a work-efficient recursive pairwise scan (O(L) work,
//! O(log L) depth). With `h₀ = 0` the state after step `t` is the `b`
//! component of the composed prefix.

use super::scan::{readout, ScanOutputs};
use super::{Discretized, ScanInputs};
use crate::profile;
use crate::tensor::Tensor;

/// Applies `first` then `second`.
#[inline]
pub fn compose_affine(first: (f64, f64), second: (f64, f64)) -> (f64, f64) {
    (second.0 * first.0, second.0 * first.1 + second.1)
}

/// In-place inclusive scan under [`compose_affine`].
pub fn inclusive_affine_scan(elems: &mut [(f64, f64)]) {
    let n = elems.len();
    if n <= 1 {
        return;
    }
    let mut pairs: Vec<(f64, f64)> = (0..n / 2)
        .map(|i| compose_affine(elems[2 * i], elems[2 * i + 1]))
        .collect();
    inclusive_affine_scan(&mut pairs);
    for i in 1..n.div_ceil(2) {
        elems[2 * i] = compose_affine(pairs[i - 1], elems[2 * i]);
    }
    for (i, p) in pairs.into_iter().enumerate() {
        elems[2 * i + 1] = p;
    }
}

/// Same result as [`selective_scan_fwd`](super::selective_scan_fwd), computed
/// per `(channel, state)` lane by prefix composition.
pub fn associative_scan_fwd(
    inputs: &ScanInputs,
    disc: &Discretized,
    d_skip: Option<&[f64]>,
) -> ScanOutputs {
    let (l, dch, n) = (inputs.len(), inputs.channels(), inputs.state_dim());
    profile::add_flops(super::scan_flops(l, dch, n, d_skip.is_some()));
    let stride = dch * n;
    let ab = disc.a_bar.data();
    let bb = disc.b_bar.data();
    let mut hidden = Tensor::zeros(&[l, dch, n]);
    let mut lane = vec![(0.0, 0.0); l];
    for d in 0..dch {
        for s in 0..n {
            for (t, e) in lane.iter_mut().enumerate() {
                let i = t * stride + d * n + s;
                *e = (ab[i], bb[i] * inputs.x.at(t, d));
            }
            inclusive_affine_scan(&mut lane);
            let hd = hidden.data_mut();
            for (t, e) in lane.iter().enumerate() {
                hd[t * stride + d * n + s] = e.1;
            }
        }
    }
    let mut y = Tensor::zeros(&[l, dch]);
    for t in 0..l {
        readout(
            y.row_mut(t),
            &hidden.data()[t * stride..(t + 1) * stride],
            inputs.c.row(t),
            inputs.x.row(t),
            d_skip,
        );
    }
    ScanOutputs { y, hidden }
}
