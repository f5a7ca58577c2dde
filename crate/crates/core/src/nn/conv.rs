use rand::Rng;

use super::params::{ParamId, ParamStore};
use crate::error::{shape_err, Result};
use crate::profile;
use crate::tensor::Tensor;

pub fn conv_flops(rows: usize, channels: usize, k: usize) -> u64 {
    2 * (rows * channels * k) as u64
}

/// Causal depthwise 1-D convolution along rows:
/// `y[t,d] = Σ_{j<k} K[d,j]·x[t−k+1+j, d] + bias[d]`, with zero left padding.
pub fn causal_dwconv1d_forward(
    x: &Tensor,
    kernel: &[f64],
    bias: &[f64],
    k: usize,
) -> Result<Tensor> {
    let (l, d) = (x.rows(), x.cols());
    if k == 0 || kernel.len() != d * k || bias.len() != d {
        return Err(shape_err(
            "causal_dwconv1d",
            format!(
                "x is [{l}×{d}], kernel has {} values for k = {k}, bias {}",
                kernel.len(),
                bias.len()
            ),
        ));
    }
    profile::add_flops(conv_flops(l, d, k));
    let mut y = Tensor::zeros(&[l, d]);
    for t in 0..l {
        let out = y.row_mut(t);
        out.copy_from_slice(bias);
        for j in 0..k {
            let Some(src) = (t + j + 1).checked_sub(k) else {
                continue;
            };
            let xr = x.row(src);
            for c in 0..d {
                out[c] += kernel[c * k + j] * xr[c];
            }
        }
    }
    Ok(y)
}

/// Accumulates kernel and bias gradients; returns `dx`.
pub fn causal_dwconv1d_backward(
    x: &Tensor,
    kernel: &[f64],
    k: usize,
    dy: &Tensor,
    dkernel: &mut [f64],
    dbias: &mut [f64],
) -> Tensor {
    let (l, d) = (x.rows(), x.cols());
    let mut dx = Tensor::zeros(&[l, d]);
    for t in 0..l {
        let g = dy.row(t).to_vec();
        for c in 0..d {
            dbias[c] += g[c];
        }
        for j in 0..k {
            let Some(src) = (t + j + 1).checked_sub(k) else {
                continue;
            };
            let xr = x.row(src).to_vec();
            let dxr = dx.row_mut(src);
            for c in 0..d {
                dkernel[c * k + j] += g[c] * xr[c];
                dxr[c] += g[c] * kernel[c * k + j];
            }
        }
    }
    dx
}

#[derive(Clone, Debug)]
pub struct CausalConv {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub channels: usize,
    pub k: usize,
}

impl CausalConv {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        k: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / (k as f64).sqrt();
        let kernel = store.add_uniform(format!("{name}.kernel"), &[channels, k], bound, true, rng);
        let bias = store.add_uniform(format!("{name}.bias"), &[channels], bound, false, rng);
        CausalConv {
            kernel,
            bias,
            channels,
            k,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        causal_dwconv1d_forward(x, store.value(self.kernel), store.value(self.bias), self.k)
    }

    pub fn backward(&self, store: &mut ParamStore, x: &Tensor, dy: &Tensor) -> Tensor {
        let mut dbias = vec![0.0; self.channels];
        let dx = {
            let (kernel, dkernel) = store.value_and_grad(self.kernel);
            causal_dwconv1d_backward(x, kernel, self.k, dy, dkernel, &mut dbias)
        };
        for (a, b) in store.grad_mut(self.bias).iter_mut().zip(dbias) {
            *a += b;
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn last_tap_kernel_is_identity() {
        let x = Tensor::matrix(5, 2, (0..10).map(|v| v as f64 * 0.5 - 1.0).collect()).unwrap();
        let kernel = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let y = causal_dwconv1d_forward(&x, &kernel, &[0.0, 0.0], 4).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn future_inputs_do_not_leak() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::matrix(6, 2, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let kernel: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y0 = causal_dwconv1d_forward(&x, &kernel, &[0.1, 0.2], 4).unwrap();
        for t in 0..5 {
            let mut xp = x.clone();
            xp.row_mut(t + 1)[0] += 3.0;
            let y1 = causal_dwconv1d_forward(&xp, &kernel, &[0.1, 0.2], 4).unwrap();
            for s in 0..=t {
                assert_eq!(y0.row(s), y1.row(s));
            }
        }
    }
}
