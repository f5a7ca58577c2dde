use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            weight_decay: 1e-2,
            betas: (0.9, 0.999),
            eps: 1e-8,
        }
    }
}

/// Adam with decoupled weight decay:
/// `θ ← θ − lr·(m̂/(√v̂ + ε) + wd·θ)`, decay only on parameters registered
/// with `decay = true`. Frozen parameters are skipped entirely.
pub struct AdamW {
    pub cfg: AdamWConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store
            .ids()
            .map(|id| vec![0.0; store.value(id).len()])
            .collect();
        AdamW {
            cfg,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update with learning rate `lr` (the configured rate when
    /// no schedule is used). Fails before touching any parameter if a
    /// gradient is not finite.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        let ids: Vec<_> = store.ids().collect();
        if let Some(&bad) = ids
            .iter()
            .find(|&&id| store.grad(id).iter().any(|g| !g.is_finite()))
        {
            return Err(Error::NonFiniteGrad(store.name(bad).to_string()));
        }
        self.step += 1;
        let (b1, b2) = self.cfg.betas;
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for (k, &id) in ids.iter().enumerate() {
            if store.is_frozen(id) {
                continue;
            }
            let wd = if store.decays(id) {
                self.cfg.weight_decay
            } else {
                0.0
            };
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            let grad = store.grad(id).to_vec();
            for (j, theta) in store.value_mut(id).iter_mut().enumerate() {
                let g = grad[j];
                m[j] = b1 * m[j] + (1.0 - b1) * g;
                v[j] = b2 * v[j] + (1.0 - b2) * g * g;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *theta -= lr * (m_hat / (v_hat.sqrt() + self.cfg.eps) + wd * *theta);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store_with(values: &[f64], decay: bool) -> ParamStore {
        let mut s = ParamStore::new();
        s.add(
            "w",
            Tensor::from_vec(&[values.len()], values.to_vec()).unwrap(),
            decay,
        );
        s
    }

    #[test]
    fn zero_gradient_only_decays() {
        let mut s = store_with(&[2.0, -4.0], true);
        let mut opt = AdamW::new(AdamWConfig::default(), &s);
        opt.step(&mut s, 1e-3).unwrap();
        let id = s.find("w").unwrap();
        assert_eq!(
            s.value(id),
            &[2.0 - 1e-3 * 1e-2 * 2.0, -4.0 - 1e-3 * 1e-2 * -4.0]
        );
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut s = store_with(&[1.0, 1.0], false);
        let id = s.find("w").unwrap();
        s.grad_mut(id).copy_from_slice(&[0.37, -12.0]);
        let mut opt = AdamW::new(
            AdamWConfig {
                weight_decay: 0.0,
                ..Default::default()
            },
            &s,
        );
        opt.step(&mut s, 1e-3).unwrap();
        let v = s.value(id);
        assert!((v[0] - (1.0 - 1e-3)).abs() < 1e-10);
        assert!((v[1] - (1.0 + 1e-3)).abs() < 1e-10);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut s = store_with(&[1.0], false);
        let id = s.find("w").unwrap();
        s.grad_mut(id)[0] = f64::NAN;
        let mut opt = AdamW::new(AdamWConfig::default(), &s);
        let err = opt.step(&mut s, 1e-3).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGrad(ref n) if n == "w"));
        assert_eq!(s.value(id), &[1.0]);
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let mut s = store_with(&[3.0], true);
        let id = s.find("w").unwrap();
        s.set_frozen(id, true);
        s.grad_mut(id)[0] = 1.0;
        let mut opt = AdamW::new(AdamWConfig::default(), &s);
        opt.step(&mut s, 1e-3).unwrap();
        assert_eq!(s.value(id), &[3.0]);
    }
}
