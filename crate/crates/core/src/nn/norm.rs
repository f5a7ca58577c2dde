use super::params::{ParamId, ParamStore};
use crate::error::{shape_err, Result};
use crate::profile::{self, TRANSCENDENTAL};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

pub fn layer_norm_flops(rows: usize, dim: usize) -> u64 {
    (rows as u64) * (7 * dim as u64 + TRANSCENDENTAL)
}

/// Values kept from the forward pass.
pub struct LayerNormCache {
    pub xhat: Tensor,
    pub rstd: Vec<f64>,
}

/// Row-wise `γ·(x−μ)/√(σ²+ε) + β` with the biased variance.
pub fn layer_norm_forward(
    x: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> Result<(Tensor, LayerNormCache)> {
    let (rows, d) = (x.rows(), x.cols());
    if d == 0 || gamma.len() != d || beta.len() != d {
        return Err(shape_err(
            "layer_norm",
            format!("x width {d}, γ has {}, β has {}", gamma.len(), beta.len()),
        ));
    }
    profile::add_flops(layer_norm_flops(rows, d));
    let mut xhat = Tensor::zeros(&[rows, d]);
    let mut y = Tensor::zeros(&[rows, d]);
    let mut rstd = Vec::with_capacity(rows);
    for i in 0..rows {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + eps).sqrt();
        rstd.push(r);
        let xh = xhat.row_mut(i);
        for (o, v) in xh.iter_mut().zip(row) {
            *o = (v - mean) * r;
        }
        let xh = xhat.row(i).to_vec();
        for (j, o) in y.row_mut(i).iter_mut().enumerate() {
            *o = gamma[j] * xh[j] + beta[j];
        }
    }
    Ok((y, LayerNormCache { xhat, rstd }))
}

/// Accumulates `dγ`, `dβ` and returns `dx`.
pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gamma: &[f64],
    dy: &Tensor,
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Tensor {
    let (rows, d) = (dy.rows(), dy.cols());
    let mut dx = Tensor::zeros(&[rows, d]);
    let mut dxhat = vec![0.0; d];
    for i in 0..rows {
        let g = dy.row(i);
        let xh = cache.xhat.row(i);
        for j in 0..d {
            dgamma[j] += g[j] * xh[j];
            dbeta[j] += g[j];
            dxhat[j] = g[j] * gamma[j];
        }
        let mean_dxhat = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dxhat_xhat = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        let r = cache.rstd[i];
        for (j, o) in dx.row_mut(i).iter_mut().enumerate() {
            *o = r * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
    dx
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Tensor::full(&[dim], 1.0), false);
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(&[dim]), false);
        LayerNorm { gamma, beta, dim }
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<(Tensor, LayerNormCache)> {
        layer_norm_forward(
            x,
            store.value(self.gamma),
            store.value(self.beta),
            LAYER_NORM_EPS,
        )
    }

    pub fn backward(&self, store: &mut ParamStore, cache: &LayerNormCache, dy: &Tensor) -> Tensor {
        let d = self.dim;
        let mut dgamma = vec![0.0; d];
        let mut dbeta = vec![0.0; d];
        let dx = layer_norm_backward(cache, store.value(self.gamma), dy, &mut dgamma, &mut dbeta);
        for (a, b) in store.grad_mut(self.gamma).iter_mut().zip(dgamma) {
            *a += b;
        }
        for (a, b) in store.grad_mut(self.beta).iter_mut().zip(dbeta) {
            *a += b;
        }
        dx
    }
}
