//! Adam with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    #[serde(default = "beta1")]
    pub beta1: f64,
    #[serde(default = "beta2")]
    pub beta2: f64,
    #[serde(default = "adam_eps")]
    pub eps: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

fn beta1() -> f64 {
    0.9
}
fn beta2() -> f64 {
    0.999
}
fn adam_eps() -> f64 {
    1e-8
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamConfig {
            lr,
            beta1: beta1(),
            beta2: beta2(),
            eps: adam_eps(),
            weight_decay,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub cfg: AdamConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update. `names` label the blocks in error messages; a non-finite
    /// gradient aborts the step without touching any parameter.
    pub fn step(&mut self, params: Vec<&mut [T]>, grads: &[Vec<T>], names: &[String]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::DimensionMismatch {
                expected: params.len(),
                got: grads.len(),
            });
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() {
                return Err(Error::DimensionMismatch {
                    expected: p.len(),
                    got: g.len(),
                });
            }
            if let Some(i) = g.iter().position(|x| !x.is_finite()) {
                let name = names.get(k).cloned().unwrap_or_else(|| format!("block{k}"));
                return Err(Error::NonFiniteGradient(format!("{name}[{i}]")));
            }
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![T::zero(); g.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let (b1, b2) = (T::of(self.cfg.beta1), T::of(self.cfg.beta2));
        let lr = T::of(self.cfg.lr);
        let wd = T::of(self.cfg.weight_decay);
        let eps = T::of(self.cfg.eps);
        let bc1 = T::one() - b1.powi(self.t as i32);
        let bc2 = T::one() - b2.powi(self.t as i32);
        for (k, p) in params.into_iter().enumerate() {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], &grads[k]);
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] = p[i] - lr * wd * p[i] - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut opt = Adam::<f64>::new(AdamConfig::new(0.1, 0.0));
        let mut p = vec![1.0, -2.0];
        opt.step(vec![&mut p[..]], &[vec![3.0, -0.5]], &[]).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 1.9).abs() < 1e-6);
    }

    #[test]
    fn decoupled_decay_with_zero_grad() {
        let mut opt = Adam::<f64>::new(AdamConfig::new(0.1, 0.5));
        let mut p = vec![2.0];
        opt.step(vec![&mut p[..]], &[vec![0.0]], &[]).unwrap();
        assert!((p[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut opt = Adam::<f64>::new(AdamConfig::new(0.05, 0.0));
        let mut p = vec![3.0, -4.0];
        for _ in 0..2000 {
            let g = vec![2.0 * (p[0] - 1.0), 2.0 * (p[1] + 0.5)];
            opt.step(vec![&mut p[..]], &[g], &[]).unwrap();
        }
        assert!((p[0] - 1.0).abs() < 1e-3 && (p[1] + 0.5).abs() < 1e-3);
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut opt = Adam::<f64>::new(AdamConfig::new(0.1, 0.0));
        let mut p = vec![1.0];
        let err = opt
            .step(vec![&mut p[..]], &[vec![f64::NAN]], &["layer0.mean".into()])
            .unwrap_err();
        assert!(err.to_string().contains("layer0.mean"));
        assert_eq!(p[0], 1.0);
        assert_eq!(opt.steps(), 0);
    }
}
