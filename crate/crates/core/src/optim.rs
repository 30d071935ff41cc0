//! Decoupled-weight-decay adaptive-moment optimizer.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::params::ParamStore;
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Linear learning-rate warmup over this many steps (0 = constant).
    pub warmup_steps: u64,
}

impl Default for AdamWConfig {
    fn default() -> AdamWConfig {
        AdamWConfig {
            lr: 3e-4,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_steps: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub cfg: AdamWConfig,
    pub step_count: u64,
    pub m: IndexMap<String, Tensor<T>>,
    pub v: IndexMap<String, Tensor<T>>,
}

impl<T: Element> AdamW<T> {
    pub fn new(cfg: AdamWConfig, store: &ParamStore<T>) -> AdamW<T> {
        let m = store
            .iter()
            .map(|(n, p)| (n.clone(), Tensor::zeros(p.value.shape())))
            .collect();
        let v = store
            .iter()
            .map(|(n, p)| (n.clone(), Tensor::zeros(p.value.shape())))
            .collect();
        AdamW {
            cfg,
            step_count: 0,
            m,
            v,
        }
    }

    fn effective_lr(&self) -> f64 {
        if self.cfg.warmup_steps > 0 && self.step_count <= self.cfg.warmup_steps {
            self.cfg.lr * self.step_count as f64 / self.cfg.warmup_steps as f64
        } else {
            self.cfg.lr
        }
    }

    /// One update from the gradients accumulated in the store.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        self.step_count += 1;
        let lr = T::from_f64(self.effective_lr());
        let b1 = T::from_f64(self.cfg.beta1);
        let b2 = T::from_f64(self.cfg.beta2);
        let one = T::one();
        let bc1 = T::from_f64(1.0 - self.cfg.beta1.powi(self.step_count as i32));
        let bc2 = T::from_f64(1.0 - self.cfg.beta2.powi(self.step_count as i32));
        let eps = T::from_f64(self.cfg.eps);
        let wd = T::from_f64(self.cfg.weight_decay);

        for (name, p) in store.iter_mut() {
            let m = self.m.get_mut(name).expect("moment buffer");
            let v = self.v.get_mut(name).expect("moment buffer");
            let md = m.data_mut();
            let vd = v.data_mut();
            let gd = p.grad.data();
            let pd = p.value.data();
            let mut new_values = Vec::with_capacity(pd.len());
            for i in 0..pd.len() {
                let g = gd[i];
                md[i] = b1 * md[i] + (one - b1) * g;
                vd[i] = b2 * vd[i] + (one - b2) * g * g;
                let mhat = md[i] / bc1;
                let vhat = vd[i] / bc2;
                let update = mhat / (vhat.sqrt() + eps) + wd * pd[i];
                new_values.push(pd[i] - lr * update);
            }
            p.value = Tensor::new(p.value.shape().to_vec(), new_values)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::params::Init;

    #[test]
    fn zero_lr_leaves_parameters_unchanged() {
        let mut store = ParamStore::<f64>::new();
        store.register("p", &[4], Init::Constant(0.5), 0).unwrap();
        store
            .accumulate_grad("p", &Tensor::full(&[4], 1.5))
            .unwrap();
        let before = store.value("p").unwrap().clone();
        let mut opt = AdamW::new(
            AdamWConfig {
                lr: 0.0,
                ..AdamWConfig::default()
            },
            &store,
        );
        opt.step(&mut store).unwrap();
        assert_eq!(store.value("p").unwrap(), &before);
    }

    #[test]
    fn single_step_matches_hand_computed_update() {
        // convex 1-parameter probe: f(p) = (p - 3)^2 / 2, grad = p - 3
        let p0 = 1.0f64;
        let g = p0 - 3.0;
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.01,
            ..AdamWConfig::default()
        };
        let mut store = ParamStore::<f64>::new();
        store.register("p", &[1], Init::Constant(p0), 0).unwrap();
        store.accumulate_grad("p", &Tensor::scalar(g)).unwrap();
        let mut opt = AdamW::new(cfg.clone(), &store);
        opt.step(&mut store).unwrap();

        // closed form after one step: mhat = g, vhat = g^2
        let expected = p0 - cfg.lr * (g / (g.abs() + cfg.eps) + cfg.weight_decay * p0);
        let got = store.value("p").unwrap().data()[0];
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn warmup_scales_learning_rate() {
        let cfg = AdamWConfig {
            lr: 1.0,
            warmup_steps: 10,
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let store = ParamStore::<f64>::new();
        let mut opt = AdamW::new(cfg, &store);
        opt.step_count = 5;
        assert!((opt.effective_lr() - 0.5).abs() < 1e-12);
        opt.step_count = 20;
        assert!((opt.effective_lr() - 1.0).abs() < 1e-12);
    }
}
