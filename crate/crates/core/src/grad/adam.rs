//! Adam with linear warmup and exponential decay.

use ndarray::Array2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub base_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    /// Learning rate multiplier reached at the final step (after warmup).
    pub final_decay: f64,
}

impl Schedule {
    pub fn new(base_lr: f64, warmup_steps: usize, total_steps: usize) -> Self {
        Schedule {
            base_lr,
            warmup_steps,
            total_steps,
            final_decay: 0.1,
        }
    }

    /// `base * min(step/warmup, 1) * decay`, with the exponential decay
    /// starting after warmup so warmup fractions are exact.
    pub fn lr(&self, step: usize) -> f64 {
        let warm = if self.warmup_steps > 0 {
            (step as f64 / self.warmup_steps as f64).min(1.0)
        } else {
            1.0
        };
        let span = self.total_steps.saturating_sub(self.warmup_steps).max(1);
        let progress = step.saturating_sub(self.warmup_steps) as f64 / span as f64;
        self.base_lr * warm * self.final_decay.powf(progress.min(1.0))
    }
}

/// First/second moment accumulators, one pair per parameter array.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: usize,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl AdamState {
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: shapes.iter().map(|s| Array2::zeros(*s)).collect(),
            v: shapes.iter().map(|s| Array2::zeros(*s)).collect(),
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// One update over aligned parameter/gradient arrays.
    pub fn step(&mut self, params: &mut [Array2<f64>], grads: &[Array2<f64>], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(params.len(), grads.len());
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, g, m, v| {
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn warmup_is_exact_fraction() {
        let s = Schedule::new(1e-3, 1000, 50_000);
        assert_relative_eq!(s.lr(500), 0.5e-3, epsilon = 1e-18);
        assert_relative_eq!(s.lr(1000), 1e-3, epsilon = 1e-18);
        // ten-fold decay by the end
        assert_relative_eq!(s.lr(50_000), 1e-4, epsilon = 1e-12);
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut adam = AdamState::new(&[(2, 2)]);
        let mut params = vec![Array2::from_elem((2, 2), 1.5)];
        let grads = vec![Array2::zeros((2, 2))];
        adam.step(&mut params, &grads, 1e-3);
        assert_eq!(params[0], Array2::from_elem((2, 2), 1.5));
    }

    #[test]
    fn constant_gradient_moves_at_roughly_lr() {
        // With a constant gradient the bias-corrected update tends to
        // lr * sign(g).
        let mut adam = AdamState::new(&[(1, 1)]);
        let mut params = vec![Array2::from_elem((1, 1), 0.0)];
        let grads = vec![Array2::from_elem((1, 1), 3.0)];
        let lr = 0.01;
        let mut prev = 0.0;
        for _ in 0..200 {
            prev = params[0][[0, 0]];
            adam.step(&mut params, &grads, lr);
        }
        let delta = prev - params[0][[0, 0]];
        assert_relative_eq!(delta, lr, max_relative = 1e-3);
    }
}
