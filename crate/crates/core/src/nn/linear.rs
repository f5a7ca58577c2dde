use rand::Rng;

use super::params::{ParamId, ParamStore};
use crate::error::{shape_err, Result};
use crate::profile;
use crate::tensor::Tensor;

pub fn linear_flops(rows: usize, din: usize, dout: usize) -> u64 {
    2 * (rows * din * dout) as u64
}

/// `y = x W + b` for `x: [L×Din]`, `W: [Din×Dout]` (row-major), `b: [Dout]`.
pub fn linear_forward(x: &Tensor, w: &[f64], b: Option<&[f64]>, dout: usize) -> Result<Tensor> {
    let (rows, din) = (x.rows(), x.cols());
    if w.len() != din * dout {
        return Err(shape_err(
            "linear",
            format!(
                "x is [{rows}×{din}] but W holds {} values for Dout = {dout}",
                w.len()
            ),
        ));
    }
    if let Some(b) = b {
        if b.len() != dout {
            return Err(shape_err(
                "linear",
                format!("bias has {} entries, Dout = {dout}", b.len()),
            ));
        }
    }
    profile::add_flops(linear_flops(rows, din, dout));
    let mut out = vec![0.0; rows * dout];
    for (i, orow) in out.chunks_exact_mut(dout.max(1)).enumerate().take(rows) {
        if let Some(b) = b {
            orow.copy_from_slice(b);
        }
        let xrow = x.row(i);
        for (k, &xv) in xrow.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wrow = &w[k * dout..(k + 1) * dout];
            for (o, &wv) in orow.iter_mut().zip(wrow) {
                *o += xv * wv;
            }
        }
    }
    Tensor::matrix(rows, dout, out)
}

/// Accumulates `dW += xᵀ dy` (and `db += Σ dy`) and returns `dx = dy Wᵀ`.
pub fn linear_backward(
    x: &Tensor,
    w: &[f64],
    dy: &Tensor,
    gw: &mut [f64],
    gb: Option<&mut [f64]>,
) -> Tensor {
    let (rows, din) = (x.rows(), x.cols());
    let dout = dy.cols();
    let mut dx = vec![0.0; rows * din];
    for i in 0..rows {
        let g = dy.row(i);
        let xrow = x.row(i);
        let dxrow = &mut dx[i * din..(i + 1) * din];
        for k in 0..din {
            let wrow = &w[k * dout..(k + 1) * dout];
            let gwrow = &mut gw[k * dout..(k + 1) * dout];
            let xv = xrow[k];
            let mut acc = 0.0;
            for j in 0..dout {
                acc += g[j] * wrow[j];
                gwrow[j] += xv * g[j];
            }
            dxrow[k] = acc;
        }
    }
    if let Some(gb) = gb {
        for i in 0..rows {
            for (b, g) in gb.iter_mut().zip(dy.row(i)) {
                *b += g;
            }
        }
    }
    Tensor::matrix(rows, din, dx).expect("shape")
}

/// Dense layer whose weights live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub din: usize,
    pub dout: usize,
}

impl Linear {
    /// Weights and bias drawn from Uniform(-1/√Din, 1/√Din).
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        din: usize,
        dout: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / (din.max(1) as f64).sqrt();
        let w = store.add_uniform(format!("{name}.weight"), &[din, dout], bound, true, rng);
        let b = bias.then(|| store.add_uniform(format!("{name}.bias"), &[dout], bound, false, rng));
        Linear { w, b, din, dout }
    }

    pub fn num_params(&self) -> usize {
        self.din * self.dout + if self.b.is_some() { self.dout } else { 0 }
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.din {
            return Err(shape_err(
                "linear",
                format!("input width {} does not match Din = {}", x.cols(), self.din),
            ));
        }
        linear_forward(
            x,
            store.value(self.w),
            self.b.map(|b| store.value(b)),
            self.dout,
        )
    }

    pub fn backward(&self, store: &mut ParamStore, x: &Tensor, dy: &Tensor) -> Tensor {
        let mut gb = self.b.map(|b| vec![0.0; store.value(b).len()]);
        let dx = {
            let (w, gw) = store.value_and_grad(self.w);
            linear_backward(x, w, dy, gw, gb.as_deref_mut())
        };
        if let (Some(b), Some(gb)) = (self.b, gb) {
            for (dst, g) in store.grad_mut(b).iter_mut().zip(gb) {
                *dst += g;
            }
        }
        dx
    }
}
