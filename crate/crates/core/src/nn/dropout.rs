use rand::Rng;

use crate::error::{Error, Result};
use crate::profile;
use crate::tensor::Tensor;

pub fn dropout_flops(n: usize, rate: f64, training: bool) -> u64 {
    if training && rate > 0.0 {
        n as u64
    } else {
        0
    }
}

/// Inverted dropout. In training each entry is zeroed with probability
/// `rate` and survivors are scaled by `1/(1−rate)`; otherwise identity.
/// Returns the per-entry scale used, or `None` when the op was the identity
/// (in which case no randomness is consumed).
pub fn dropout_forward(
    x: &Tensor,
    rate: f64,
    rng: &mut impl Rng,
    training: bool,
) -> Result<(Tensor, Option<Tensor>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Domain {
            op: "dropout",
            detail: format!("rate must lie in [0, 1), got {rate}"),
        });
    }
    if !training || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    profile::add_flops(dropout_flops(x.len(), rate, training));
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let mask = Tensor::from_vec(x.shape(), mask)?;
    let y = x.mul(&mask)?;
    Ok((y, Some(mask)))
}

pub fn dropout_backward(mask: Option<&Tensor>, dy: &Tensor) -> Tensor {
    match mask {
        Some(m) => dy.mul(m).expect("mask matches upstream shape"),
        None => dy.clone(),
    }
}
