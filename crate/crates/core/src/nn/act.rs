//! Pointwise activations. Scalar forms are overflow-safe for any finite input.

use crate::profile::{self, TRANSCENDENTAL};
use crate::tensor::Tensor;

pub const SIGMOID_FLOPS: u64 = TRANSCENDENTAL;
pub const SILU_FLOPS: u64 = TRANSCENDENTAL + 1;
pub const SOFTPLUS_FLOPS: u64 = 2 * TRANSCENDENTAL;
pub const RELU_FLOPS: u64 = 1;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// `ln(1 + e^x)` as `max(x, 0) + ln(1 + e^-|x|)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inverse(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

fn pointwise(x: &Tensor, cost: u64, f: impl Fn(f64) -> f64) -> Tensor {
    profile::add_flops(cost * x.len() as u64);
    x.map(f)
}

fn pointwise_grad(x: &Tensor, dy: &Tensor, df: impl Fn(f64) -> f64) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| g * df(v))
        .collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

pub fn sigmoid_forward(x: &Tensor) -> Tensor {
    pointwise(x, SIGMOID_FLOPS, sigmoid)
}

pub fn sigmoid_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    pointwise_grad(x, dy, |v| {
        let s = sigmoid(v);
        s * (1.0 - s)
    })
}

pub fn silu_forward(x: &Tensor) -> Tensor {
    pointwise(x, SILU_FLOPS, silu)
}

pub fn silu_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    pointwise_grad(x, dy, silu_grad)
}

pub fn softplus_forward(x: &Tensor) -> Tensor {
    pointwise(x, SOFTPLUS_FLOPS, softplus)
}

pub fn softplus_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    pointwise_grad(x, dy, sigmoid)
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    pointwise(x, RELU_FLOPS, |v| v.max(0.0))
}

pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    pointwise_grad(x, dy, |v| if v > 0.0 { 1.0 } else { 0.0 })
}
