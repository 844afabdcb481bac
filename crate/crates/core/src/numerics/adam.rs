//! Adam optimizer with bias correction.

use crate::error::{Error, Result};
use crate::numerics::param::Param;
use crate::real::{from_f64, Real};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

struct Moments<S> {
    m: Vec<S>,
    v: Vec<S>,
}

/// Optimizer state; one slot per parameter, matched by position.
pub struct Adam<S> {
    cfg: AdamConfig,
    step: u64,
    moments: Vec<Moments<S>>,
}

impl<S: Real> Adam<S> {
    pub fn new(cfg: AdamConfig, params: &[&Param<S>]) -> Result<Self> {
        if cfg.lr <= 0.0 {
            return Err(Error::invalid("Adam learning rate must be positive"));
        }
        let moments = params
            .iter()
            .map(|p| Moments {
                m: vec![S::zero(); p.len()],
                v: vec![S::zero(); p.len()],
            })
            .collect();
        Ok(Adam {
            cfg,
            step: 0,
            moments,
        })
    }

    /// One update from the gradients accumulated in each param. Grads are
    /// zeroed afterwards.
    pub fn step(&mut self, params: &mut [&mut Param<S>]) {
        assert_eq!(params.len(), self.moments.len(), "param set changed");
        self.step += 1;
        let b1 = from_f64::<S>(self.cfg.beta1);
        let b2 = from_f64::<S>(self.cfg.beta2);
        let lr = from_f64::<S>(self.cfg.lr);
        let eps = from_f64::<S>(self.cfg.eps);
        let corr1 = from_f64::<S>(1.0 - self.cfg.beta1.powi(self.step as i32));
        let corr2 = from_f64::<S>(1.0 - self.cfg.beta2.powi(self.step as i32));
        for (p, mo) in params.iter_mut().zip(&mut self.moments) {
            for i in 0..p.len() {
                let g = p.grad[i];
                mo.m[i] = b1 * mo.m[i] + (S::one() - b1) * g;
                mo.v[i] = b2 * mo.v[i] + (S::one() - b2) * g * g;
                let m_hat = mo.m[i] / corr1;
                let v_hat = mo.v[i] / corr2;
                p.values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            p.zero_grad();
        }
    }
}
