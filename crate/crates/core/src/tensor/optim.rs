use crate::error::{Error, Result};

use super::{Element, Tensor};

/// Hyperparameters of [`Adam`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-6,
        }
    }
}

/// Bias-corrected Adam with weight decay added to the gradient.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: u64,
}

impl<T: Element> Adam<T> {
    /// One pair of moment buffers per parameter shape.
    pub fn new<S: AsRef<[usize]>>(config: AdamConfig, shapes: &[S]) -> Self {
        Self {
            config,
            m: shapes.iter().map(|s| Tensor::zeros(s.as_ref())).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s.as_ref())).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn first_moments(&self) -> &[Tensor<T>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor<T>] {
        &self.v
    }

    /// Applies one update to every parameter in order.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.m[i].shape() || g.shape() != self.m[i].shape() {
                return Err(Error::Shape(format!(
                    "parameter {i}: state {:?}, value {:?}, gradient {:?}",
                    self.m[i].shape(),
                    p.shape(),
                    g.shape()
                )));
            }
        }
        self.t += 1;
        let c = &self.config;
        let t = self.t as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::from_f64c(c.beta1), T::from_f64c(c.beta2));
        let (ob1, ob2) = (T::from_f64c(1.0 - c.beta1), T::from_f64c(1.0 - c.beta2));
        let wd = T::from_f64c(c.weight_decay);
        let step = T::from_f64c(c.lr / bc1);
        let inv_bc2 = T::from_f64c(1.0 / bc2);
        let eps = T::from_f64c(c.eps);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (k, theta) in p.data_mut().iter_mut().enumerate() {
                let gk = g.data()[k] + wd * *theta;
                m[k] = b1 * m[k] + ob1 * gk;
                v[k] = b2 * v[k] + ob2 * gk * gk;
                *theta -= step * m[k] / ((v[k] * inv_bc2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// `base_lr * gamma^(epoch / step_size)` with integer division.
pub fn step_lr_schedule(epoch: usize, base_lr: f64, step_size: usize, gamma: f64) -> f64 {
    let step_size = step_size.max(1);
    base_lr * gamma.powi((epoch / step_size) as i32)
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Element>(grads: &mut [Tensor<T>], max_norm: f64) -> f64 {
    let total = grads.iter().map(|g| g.norm().powi(2)).sum::<f64>().sqrt();
    if total > max_norm && total > 0.0 {
        let f = T::from_f64c(max_norm / total);
        for g in grads.iter_mut() {
            for x in g.data_mut() {
                *x *= f;
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_adam(wd: f64) -> Adam<f64> {
        Adam::new(
            AdamConfig {
                weight_decay: wd,
                ..AdamConfig::default()
            },
            &[[1usize]],
        )
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut opt = scalar_adam(0.0);
        let mut p = Tensor::from_f64(&[1], &[0.0]).unwrap();
        let g = Tensor::from_f64(&[1], &[0.5]).unwrap();
        opt.step(&mut [&mut p], &[&g]).unwrap();
        assert!((p.data()[0] + 1e-3).abs() < 1e-10);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut opt = scalar_adam(0.0);
        let mut p = Tensor::from_f64(&[1], &[0.7]).unwrap();
        let g = Tensor::zeros(&[1]);
        for _ in 0..5 {
            opt.step(&mut [&mut p], &[&g]).unwrap();
        }
        assert_eq!(p.data()[0], 0.7);
    }

    #[test]
    fn two_steps_match_hand_unroll() {
        let (lr, b1, b2, eps, wd): (f64, f64, f64, f64, f64) = (1e-3, 0.9, 0.999, 1e-8, 1e-2);
        let g = 0.3;
        let mut theta = 1.5;
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=2 {
            let gt = g + wd * theta;
            m = b1 * m + (1.0 - b1) * gt;
            v = b2 * v + (1.0 - b2) * gt * gt;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            theta -= lr * mh / (vh.sqrt() + eps);
        }
        let mut opt = scalar_adam(wd);
        let mut p = Tensor::from_f64(&[1], &[1.5]).unwrap();
        let gt = Tensor::from_f64(&[1], &[g]).unwrap();
        opt.step(&mut [&mut p], &[&gt]).unwrap();
        opt.step(&mut [&mut p], &[&gt]).unwrap();
        assert!((p.data()[0] - theta).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut opt = scalar_adam(0.0);
        let mut p = Tensor::<f64>::zeros(&[2]);
        let g = Tensor::zeros(&[2]);
        assert!(opt.step(&mut [&mut p], &[&g]).is_err());
    }

    #[test]
    fn schedule_values() {
        assert_eq!(step_lr_schedule(0, 0.001, 20, 0.5), 0.001);
        assert_eq!(step_lr_schedule(20, 0.001, 20, 0.5), 0.0005);
        assert_eq!(step_lr_schedule(45, 0.001, 20, 0.5), 0.00025);
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![Tensor::<f64>::from_f64(&[2], &[3.0, 4.0]).unwrap()];
        let before = clip_grad_norm(&mut g, 1.0);
        assert_eq!(before, 5.0);
        assert!((g[0].norm() - 1.0).abs() < 1e-12);
    }
}
