use super::discretize::{zoh_a_term, Discretization, Discretized};
use super::ScanInputs;
use crate::profile;
use crate::tensor::Tensor;

pub struct ScanOutputs {
    pub y: Tensor,
    /// `h_t` for every step, kept for the backward pass.
    pub hidden: Tensor,
}

/// Gradients of a scalar loss w.r.t. every scan input and SSM parameter.
pub struct ScanGrads {
    pub dx: Tensor,
    pub ddelta: Tensor,
    pub db: Tensor,
    pub dc: Tensor,
    /// `[D′×N]`
    pub da_log: Vec<f64>,
    pub dd_skip: Option<Vec<f64>>,
}

/// Per-element state update (2 products and a sum) plus the output
/// multiply-add, and a multiply-add per output for the skip term.
pub fn scan_flops(l: usize, channels: usize, state: usize, skip: bool) -> u64 {
    let core = (l * channels * state) as u64 * 5;
    core + if skip { 2 * (l * channels) as u64 } else { 0 }
}

/// `y_t[d] = Σ_n C_t[n] h_t[d,n] + D[d] x_t[d]` for one step.
pub(crate) fn readout(
    y_row: &mut [f64],
    h_t: &[f64],
    c_row: &[f64],
    x_row: &[f64],
    d_skip: Option<&[f64]>,
) {
    let n = c_row.len();
    for (d, y) in y_row.iter_mut().enumerate() {
        let h = &h_t[d * n..(d + 1) * n];
        let mut acc = 0.0;
        for s in 0..n {
            acc += c_row[s] * h[s];
        }
        if let Some(skip) = d_skip {
            acc += skip[d] * x_row[d];
        }
        *y = acc;
    }
}

/// Sequential selective scan from `h₀ = 0`.
pub fn selective_scan_fwd(
    inputs: &ScanInputs,
    disc: &Discretized,
    d_skip: Option<&[f64]>,
) -> ScanOutputs {
    let (l, dch, n) = (inputs.len(), inputs.channels(), inputs.state_dim());
    profile::add_flops(scan_flops(l, dch, n, d_skip.is_some()));
    let mut hidden = Tensor::zeros(&[l, dch, n]);
    let mut y = Tensor::zeros(&[l, dch]);
    let ab = disc.a_bar.data();
    let bb = disc.b_bar.data();
    let stride = dch * n;
    {
        let hd = hidden.data_mut();
        for t in 0..l {
            let x_row = inputs.x.row(t);
            for d in 0..dch {
                let xv = x_row[d];
                for s in 0..n {
                    let i = t * stride + d * n + s;
                    let prev = if t > 0 { hd[i - stride] } else { 0.0 };
                    hd[i] = ab[i] * prev + bb[i] * xv;
                }
            }
        }
    }
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

/// Reverse-time adjoint of [`selective_scan_fwd`] chained through the
/// discretization. `a` is `−exp(A_log)` as used in the forward pass.
pub fn selective_scan_bwd(
    inputs: &ScanInputs,
    disc: &Discretized,
    out: &ScanOutputs,
    a: &[f64],
    d_skip: Option<&[f64]>,
    dy: &Tensor,
) -> ScanGrads {
    let (l, dch, n) = (inputs.len(), inputs.channels(), inputs.state_dim());
    let stride = dch * n;
    let ab = disc.a_bar.data();
    let bb = disc.b_bar.data();
    let h = out.hidden.data();
    let mut dx = Tensor::zeros(&[l, dch]);
    let mut ddelta = Tensor::zeros(&[l, dch]);
    let mut db = Tensor::zeros(&[l, n]);
    let mut dc = Tensor::zeros(&[l, n]);
    let mut da = vec![0.0; stride];
    let mut carry = vec![0.0; stride];
    for t in (0..l).rev() {
        let dy_row = dy.row(t);
        let c_row = inputs.c.row(t);
        let b_row = inputs.b.row(t);
        let x_row = inputs.x.row(t);
        let mut dc_row = vec![0.0; n];
        let mut db_row = vec![0.0; n];
        for d in 0..dch {
            let g_y = dy_row[d];
            let dt = inputs.delta.at(t, d);
            let xv = x_row[d];
            let mut dx_acc = 0.0;
            let mut ddt = 0.0;
            for s in 0..n {
                let i = t * stride + d * n + s;
                let k = d * n + s;
                let g = g_y * c_row[s] + carry[k];
                dc_row[s] += g_y * h[i];
                let prev = if t > 0 { h[i - stride] } else { 0.0 };
                let d_abar = g * prev;
                let d_bbar = g * xv;
                dx_acc += g * bb[i];
                carry[k] = g * ab[i];
                let av = a[k];
                let abar = ab[i];
                match disc.mode {
                    Discretization::Zoh => {
                        let u = dt * av;
                        ddt += d_abar * abar * av + d_bbar * b_row[s] * abar;
                        da[k] += d_abar * abar * dt + d_bbar * b_row[s] * zoh_a_term(u) / (av * av);
                        db_row[s] += d_bbar * u.exp_m1() / av;
                    }
                    Discretization::Simplified => {
                        ddt += d_abar * abar * av + d_bbar * b_row[s];
                        da[k] += d_abar * abar * dt;
                        db_row[s] += d_bbar * dt;
                    }
                }
            }
            if let Some(skip) = d_skip {
                dx_acc += skip[d] * g_y;
            }
            dx.row_mut(t)[d] = dx_acc;
            ddelta.row_mut(t)[d] = ddt;
        }
        dc.row_mut(t).copy_from_slice(&dc_row);
        db.row_mut(t).copy_from_slice(&db_row);
    }
    let dd_skip = d_skip.map(|_| {
        (0..dch)
            .map(|d| (0..l).map(|t| dy.at(t, d) * inputs.x.at(t, d)).sum())
            .collect()
    });
    let da_log = da.iter().zip(a).map(|(g, av)| g * av).collect();
    ScanGrads {
        dx,
        ddelta,
        db,
        dc,
        da_log,
        dd_skip,
    }
}
