use crate::nn::act::sigmoid;

/// Gated recurrence `g_t = σ(z_t)`, `h_t = (1 − g_t) h_{t−1} + g_t x_t`,
/// from `h₀ = 0`; `z` is the gate pre-activation sequence.
pub fn gated_rnn_reference(x: &[f64], z: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), z.len(), "x and z must have equal length");
    let mut h = 0.0;
    x.iter()
        .zip(z)
        .map(|(&xv, &zv)| {
            let g = sigmoid(zv);
            h = (1.0 - g) * h + g * xv;
            h
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_gate_freezes_context() {
        let h = gated_rnn_reference(&[1.0, 5.0, -3.0], &[50.0, -800.0, -800.0]);
        assert!((h[0] - 1.0).abs() < 1e-15);
        assert_eq!(h[1], h[0]);
        assert_eq!(h[2], h[0]);
    }

    #[test]
    fn open_gate_resets_to_input() {
        let h = gated_rnn_reference(&[1.0, 5.0, -3.0], &[800.0; 3]);
        assert_eq!(h, vec![1.0, 5.0, -3.0]);
    }
}
