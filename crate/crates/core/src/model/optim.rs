use super::backprop::HeadGradients;
use super::train::TrainConfig;
use super::WideDeepHead;
use crate::Scalar;

pub fn warmup_steps(total_steps: usize, warmup_fraction: f64) -> usize {
    (warmup_fraction * total_steps as f64).ceil() as usize
}

/// Linear warmup from 0 to `base_lr`, then linear decay to 0 at `total_steps`.
pub fn lr_at_step(step: usize, total_steps: usize, config: &TrainConfig) -> f64 {
    let warmup = warmup_steps(total_steps, config.warmup_fraction);
    if step < warmup {
        return config.base_lr * step as f64 / warmup as f64;
    }
    if step >= total_steps {
        return 0.0;
    }
    config.base_lr * (total_steps - step) as f64 / (total_steps - warmup) as f64
}

/// Adam with bias-corrected first and second moment estimates.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    step: i32,
    first: HeadGradients<T>,
    second: HeadGradients<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(head: &WideDeepHead<T>) -> Self {
        Adam {
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
            step: 0,
            first: HeadGradients::zeros_like(head),
            second: HeadGradients::zeros_like(head),
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    pub fn update(&mut self, head: &mut WideDeepHead<T>, grads: &HeadGradients<T>, lr: T) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let correction1 = T::one() - b1.powi(self.step);
        let correction2 = T::one() - b2.powi(self.step);
        let layers = head.layers_mut().zip(&grads.layers).zip(
            self.first
                .layers
                .iter_mut()
                .zip(self.second.layers.iter_mut()),
        );
        for (((weights, bias), g), (m, v)) in layers {
            let params = weights.iter_mut().chain(bias.iter_mut());
            let grad = g.weights.iter().chain(&g.bias);
            let moments = m
                .weights
                .iter_mut()
                .chain(m.bias.iter_mut())
                .zip(v.weights.iter_mut().chain(v.bias.iter_mut()));
            for ((p, &g), (m, v)) in params.zip(grad).zip(moments) {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, DenseLayer, LayerGradient};

    fn config() -> TrainConfig {
        TrainConfig {
            base_lr: 2e-4,
            warmup_fraction: 0.1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn schedule_hand_values() {
        let c = config();
        assert_eq!(warmup_steps(100, 0.1), 10);
        assert_eq!(lr_at_step(0, 100, &c), 0.0);
        assert!((lr_at_step(10, 100, &c) - c.base_lr).abs() < 1e-18);
        assert_eq!(lr_at_step(100, 100, &c), 0.0);
        assert!((lr_at_step(55, 100, &c) - c.base_lr / 2.0).abs() < 1e-18);
        assert!((lr_at_step(5, 100, &c) - c.base_lr / 2.0).abs() < 1e-18);
        // ceil: 0.1 * 57 = 5.7 -> 6 warmup steps
        assert_eq!(warmup_steps(57, 0.1), 6);
    }

    #[test]
    fn schedule_is_continuous_and_nonnegative() {
        let c = config();
        for total in [1usize, 2, 7, 10, 57, 1140] {
            let warmup = warmup_steps(total, c.warmup_fraction);
            for step in 0..=total {
                let lr = lr_at_step(step, total, &c);
                assert!(
                    lr >= 0.0 && lr <= c.base_lr,
                    "total {total} step {step}: {lr}"
                );
            }
            if warmup < total {
                let before = lr_at_step(warmup - 1, total, &c);
                let at = lr_at_step(warmup, total, &c);
                let after = lr_at_step(warmup + 1, total, &c);
                let step_up = c.base_lr / warmup as f64;
                let step_down = c.base_lr / (total - warmup) as f64;
                assert!((at - before - step_up).abs() < 1e-15);
                assert!((at - after - step_down).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn first_adam_step_moves_by_lr_against_the_gradient_sign() {
        let layer =
            DenseLayer::from_parts(1, 2, vec![1.0, -1.0], vec![0.0, 0.0], Activation::Identity)
                .unwrap();
        let mut head = WideDeepHead::<f64>::new(1, 0, vec![], vec![], layer).unwrap();
        let grads = HeadGradients {
            layers: vec![LayerGradient {
                weights: vec![0.3, -2.0],
                bias: vec![0.0, 1e-3],
            }],
        };
        let mut adam = Adam::new(&head);
        adam.update(&mut head, &grads, 0.01);
        let f = head.fusion();
        assert!((f.weights[0] - (1.0 - 0.01)).abs() < 1e-9);
        assert!((f.weights[1] - (-1.0 + 0.01)).abs() < 1e-9);
        assert_eq!(f.bias[0], 0.0);
        assert!((f.bias[1] + 0.01).abs() < 1e-6);
        assert_eq!(adam.steps_taken(), 1);
    }
}
