use super::NamedTensorStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with per-parameter moments keyed by name.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: NamedTensorStore,
    v: NamedTensorStore,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Result<Self> {
        if !(config.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", config.lr)));
        }
        Ok(Adam {
            config,
            step: 0,
            m: NamedTensorStore::new(),
            v: NamedTensorStore::new(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn first_moments(&self) -> &NamedTensorStore {
        &self.m
    }

    pub fn second_moments(&self) -> &NamedTensorStore {
        &self.v
    }

    /// Applies one update to every parameter. Every parameter needs a
    /// gradient of matching dims.
    pub fn step(&mut self, params: &mut NamedTensorStore, grads: &NamedTensorStore) -> Result<()> {
        for (name, p) in params.iter() {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::Usage(format!("no gradient for parameter '{name}'")))?;
            if g.dims() != p.dims() {
                return Err(Error::Usage(format!(
                    "gradient for '{name}' has dims {:?}, parameter has {:?}",
                    g.dims(),
                    p.dims()
                )));
            }
            if !self.m.contains(name) {
                self.m.set(name, super::Tensor::zeros(p.dims()));
                self.v.set(name, super::Tensor::zeros(p.dims()));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (name, p) in params.iter_mut() {
            let g = grads.get(name).unwrap().data();
            let m = self.m.get_mut(name).unwrap().data_mut();
            for (mi, gi) in m.iter_mut().zip(g) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
            }
            let v = self.v.get_mut(name).unwrap().data_mut();
            for (vi, gi) in v.iter_mut().zip(g) {
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            }
            let m = self.m.get(name).unwrap().data();
            let v = self.v.get(name).unwrap().data();
            for ((pi, mi), vi) in p.data_mut().iter_mut().zip(m).zip(v) {
                let mhat = mi / bc1;
                let vhat = vi / bc2;
                *pi -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store(vals: &[f64]) -> NamedTensorStore {
        let mut s = NamedTensorStore::new();
        s.insert("p", Tensor::new(&[vals.len()], vals.to_vec()).unwrap()).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = store(&[1.0, -2.0]);
        let g = store(&[0.0, 0.0]);
        let mut opt = Adam::new(AdamConfig::default()).unwrap();
        for _ in 0..5 {
            opt.step(&mut p, &g).unwrap();
        }
        assert_eq!(p.get("p").unwrap().data(), &[1.0, -2.0]);
        assert_eq!(opt.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = store(&[0.0, 0.0, 0.0]);
        let g = store(&[0.3, -7.0, 1e-3]);
        let mut opt = Adam::new(AdamConfig::default()).unwrap();
        opt.step(&mut p, &g).unwrap();
        let got = p.get("p").unwrap().data();
        for (x, s) in got.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((x - s * 3e-4).abs() < 1e-8, "{x}");
        }
    }

    #[test]
    fn missing_gradient_is_usage_error() {
        let mut p = store(&[1.0]);
        let mut opt = Adam::new(AdamConfig::default()).unwrap();
        let err = opt.step(&mut p, &NamedTensorStore::new()).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn rejects_nonpositive_lr() {
        assert!(Adam::new(AdamConfig { lr: 0.0, ..Default::default() }).is_err());
    }
}
