use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub cfg: AdamConfig,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u32,
}

impl<T: Real> Adam<T> {
    pub fn new(cfg: AdamConfig, n: usize) -> Self {
        Self {
            cfg,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
        }
    }

    pub fn adam_step(&mut self, params: &mut [T], grads: &[T]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let b1 = T::lit(self.cfg.beta1);
        let b2 = T::lit(self.cfg.beta2);
        let lr = T::lit(self.cfg.lr);
        let eps = T::lit(self.cfg.eps);
        let c1 = T::one() - b1.powi(self.step as i32);
        let c2 = T::one() - b2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] = params[i] - lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params() {
        let mut adam = Adam::<f64>::new(AdamConfig::with_lr(0.1), 3);
        let mut p = vec![1.0, -2.0, 3.0];
        adam.adam_step(&mut p, &[0.0; 3]);
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut adam = Adam::<f64>::new(AdamConfig::with_lr(0.01), 1);
        let mut p = vec![0.5];
        adam.adam_step(&mut p, &[1.0]);
        // mhat = 1, vhat = 1
        assert!((p[0] - (0.5 - 0.01 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn two_steps_hand_traced() {
        let mut adam = Adam::<f64>::new(AdamConfig::with_lr(0.1), 1);
        let mut p = vec![0.0];
        adam.adam_step(&mut p, &[2.0]);
        adam.adam_step(&mut p, &[-1.0]);
        // step 2: m = 0.9*0.2 - 0.1 = 0.08, v = 0.999*0.004 + 0.001 = 0.004996
        let m = 0.08 / (1.0 - 0.81);
        let v = 0.004996f64 / (1.0 - 0.998001);
        let expect = -0.1 * 2.0 / (2.0 + 1e-8) - 0.1 * m / (v.sqrt() + 1e-8);
        assert!((p[0] - expect).abs() < 1e-12, "{} vs {}", p[0], expect);
    }
}
