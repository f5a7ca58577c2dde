use serde::{Deserialize, Serialize};

use super::ScanInputs;
use crate::error::{shape_err, Error, Result};
use crate::profile::{self, TRANSCENDENTAL};
use crate::tensor::Tensor;

/// How `B̄` is formed from `Δ`, `A`, `B`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    /// Exact zero-order hold: `B̄ = ((exp(ΔA) − 1)/A)·B`.
    #[default]
    Zoh,
    /// First-order `B̄ = Δ·B`.
    Simplified,
}

pub struct Discretized {
    pub a_bar: Tensor,
    pub b_bar: Tensor,
    pub mode: Discretization,
}

pub fn discretize_flops(l: usize, channels: usize, state: usize, mode: Discretization) -> u64 {
    let per = match mode {
        Discretization::Zoh => 1 + TRANSCENDENTAL + 3,
        Discretization::Simplified => 1 + TRANSCENDENTAL + 1,
    };
    (l * channels * state) as u64 * per
}

/// `Ā[t,d,n] = exp(Δ[t,d]·A[d,n])` and `B̄[t,d,n]` per `mode`.
/// `a` is the `[D′×N]` state matrix diagonal (strictly negative).
pub fn discretize(
    delta: &Tensor,
    a: &[f64],
    b: &Tensor,
    mode: Discretization,
) -> Result<Discretized> {
    let (l, d) = (delta.rows(), delta.cols());
    let n = b.cols();
    if b.rows() != l || a.len() != d * n {
        return Err(shape_err(
            "discretize",
            format!(
                "Δ {:?}, B {:?}, A has {} entries",
                delta.shape(),
                b.shape(),
                a.len()
            ),
        ));
    }
    if let Some(bad) = delta.data().iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain {
            op: "discretize",
            detail: format!("step size Δ must be positive, got {bad}"),
        });
    }
    if let Some(bad) = a.iter().find(|v| !(**v < 0.0)) {
        return Err(Error::Domain {
            op: "discretize",
            detail: format!("state matrix entries must be negative, got {bad}"),
        });
    }
    profile::add_flops(discretize_flops(l, d, n, mode));
    let mut a_bar = Tensor::zeros(&[l, d, n]);
    let mut b_bar = Tensor::zeros(&[l, d, n]);
    {
        let ab = a_bar.data_mut();
        let bb = b_bar.data_mut();
        for t in 0..l {
            let brow = b.row(t);
            for c in 0..d {
                let dt = delta.at(t, c);
                for s in 0..n {
                    let av = a[c * n + s];
                    let u = dt * av;
                    let i = (t * d + c) * n + s;
                    ab[i] = u.exp();
                    bb[i] = match mode {
                        Discretization::Zoh => u.exp_m1() / av * brow[s],
                        Discretization::Simplified => dt * brow[s],
                    };
                }
            }
        }
    }
    Ok(Discretized { a_bar, b_bar, mode })
}

impl Discretized {
    pub fn for_inputs(inputs: &ScanInputs, a: &[f64], mode: Discretization) -> Result<Self> {
        discretize(&inputs.delta, a, &inputs.b, mode)
    }
}

/// `u·eᵘ − (eᵘ − 1)`, accurate for small `|u|`.
pub(crate) fn zoh_a_term(u: f64) -> f64 {
    if u.abs() < 1e-2 {
        let u2 = u * u;
        u2 * (0.5
            + u * (1.0 / 3.0 + u * (1.0 / 8.0 + u * (1.0 / 30.0 + u * (1.0 / 144.0 + u / 840.0)))))
    } else {
        u * u.exp() - u.exp_m1()
    }
}
