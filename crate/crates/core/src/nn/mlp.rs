use rand::Rng;

use super::act::{relu_backward, relu_forward};
use super::linear::Linear;
use super::params::ParamStore;
use crate::error::Result;
use crate::tensor::Tensor;

/// Two dense layers with a ReLU between them.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub first: Linear,
    pub second: Linear,
}

pub struct MlpCache {
    x: Tensor,
    pre: Tensor,
    hidden: Tensor,
}

impl MlpCache {
    /// Smallest `|ReLU input|`.
    pub fn relu_margin(&self) -> f64 {
        self.pre
            .data()
            .iter()
            .map(|v| v.abs())
            .fold(f64::INFINITY, f64::min)
    }
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        din: usize,
        hidden: usize,
        dout: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Mlp {
            first: Linear::new(store, &format!("{name}.fc1"), din, hidden, true, rng),
            second: Linear::new(store, &format!("{name}.fc2"), hidden, dout, true, rng),
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.first.dout
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<(Tensor, MlpCache)> {
        let pre = self.first.forward(store, x)?;
        let hidden = relu_forward(&pre);
        let y = self.second.forward(store, &hidden)?;
        Ok((
            y,
            MlpCache {
                x: x.clone(),
                pre,
                hidden,
            },
        ))
    }

    pub fn backward(&self, store: &mut ParamStore, cache: &MlpCache, dy: &Tensor) -> Tensor {
        let dh = self.second.backward(store, &cache.hidden, dy);
        let dpre = relu_backward(&cache.pre, &dh);
        self.first.backward(store, &cache.x, &dpre)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_weights_output_final_bias() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", 3, 6, 3, &mut rng);
        for id in [mlp.first.w, mlp.second.w] {
            store.value_mut(id).iter_mut().for_each(|v| *v = 0.0);
        }
        let x = Tensor::matrix(2, 3, vec![1., 2., 3., -4., 5., 6.]).unwrap();
        let (y, _) = mlp.forward(&store, &x).unwrap();
        let b = store.value(mlp.second.b.unwrap()).to_vec();
        assert_eq!(y.row(0), b.as_slice());
        assert_eq!(y.row(1), b.as_slice());
    }
}
