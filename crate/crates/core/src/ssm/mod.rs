//! Selective state-space kernel.
//!
//! Per channel `d` and state slot `n` the recurrence is
//! `h_t = Ā_t h_{t−1} + B̄_t x_t`, `y_t = ⟨C_t, h_t⟩ (+ D x_t)`, with
//! `Ā = exp(ΔA)` and the zero-order-hold input matrix
//! `B̄ = (ΔA)⁻¹(exp(ΔA) − I)·ΔB`, which for diagonal `A` reduces to
//! `((exp(ΔA) − 1)/A)·B`. `A = −exp(A_log)` is diagonal per channel.
//!
//! Tensor layouts: `x`, `Δ`, `y` are `[L×D′]`; `B`, `C` are `[L×N]`;
//! `Ā`, `B̄` and hidden states are `[L×D′×N]`.

mod assoc;
mod discretize;
mod gated;
mod scan;

pub use assoc::{associative_scan_fwd, compose_affine, inclusive_affine_scan};
pub use discretize::{discretize, discretize_flops, Discretization, Discretized};
pub use gated::gated_rnn_reference;
pub use scan::{scan_flops, selective_scan_bwd, selective_scan_fwd, ScanGrads, ScanOutputs};

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Per-step scan inputs.
#[derive(Clone, Debug)]
pub struct ScanInputs {
    pub x: Tensor,
    pub delta: Tensor,
    pub b: Tensor,
    pub c: Tensor,
}

impl ScanInputs {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels(&self) -> usize {
        self.x.cols()
    }

    pub fn state_dim(&self) -> usize {
        self.b.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let (l, d, n) = (self.len(), self.channels(), self.state_dim());
        if self.delta.shape() != [l, d] || self.b.shape() != [l, n] || self.c.shape() != [l, n] {
            return Err(shape_err(
                "selective_scan",
                format!(
                    "x {:?}, Δ {:?}, B {:?}, C {:?}",
                    self.x.shape(),
                    self.delta.shape(),
                    self.b.shape(),
                    self.c.shape()
                ),
            ));
        }
        Ok(())
    }
}

/// Standalone SSM state parameters (the block stores the same values in its
/// parameter store).
#[derive(Clone, Debug, PartialEq)]
pub struct SsmParams {
    pub channels: usize,
    pub state: usize,
    /// `[D′×N]`, `A = −exp(A_log)`.
    pub a_log: Vec<f64>,
    pub d_skip: Option<Vec<f64>>,
}

impl SsmParams {
    /// Real diagonal initialization with `−A = 1, 2, …, N` in every channel
    /// and the skip term set to 1.
    pub fn s4d_real(channels: usize, state: usize, skip: bool) -> Self {
        SsmParams {
            channels,
            state,
            a_log: s4d_real_a_log(channels, state),
            d_skip: skip.then(|| vec![1.0; channels]),
        }
    }

    pub fn a(&self) -> Vec<f64> {
        a_from_log(&self.a_log)
    }
}

pub fn s4d_real_a_log(channels: usize, state: usize) -> Vec<f64> {
    (0..channels)
        .flat_map(|_| (1..=state).map(|n| (n as f64).ln()))
        .collect()
}

pub fn a_from_log(a_log: &[f64]) -> Vec<f64> {
    a_log.iter().map(|v| -v.exp()).collect()
}
