use super::{KernelError, Matrix, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Default::default()
        }
    }
}

/// Moment buffers for a fixed, ordered list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Real = f64> {
    pub config: AdamConfig,
    pub first_moment: Vec<Matrix<T>>,
    pub second_moment: Vec<Matrix<T>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, shapes: &[(usize, usize)]) -> Self {
        let zeros = || shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect();
        AdamState {
            config,
            first_moment: zeros(),
            second_moment: zeros(),
            step: 0,
        }
    }

    /// One bias-corrected Adam update. The whole step is rejected, leaving
    /// parameters and state untouched, if any gradient entry is not finite.
    pub fn step(&mut self, params: &mut [&mut Matrix<T>], grads: &[&Matrix<T>]) -> Result<(), KernelError> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(KernelError::TensorCountMismatch {
                params: params.len(),
                grads: grads.len(),
            });
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first_moment[k].shape() {
                return Err(KernelError::DimensionMismatch {
                    op: "adam_step",
                    expected: p.len(),
                    actual: g.len(),
                });
            }
            if let Some(index) = g.first_non_finite() {
                return Err(KernelError::NonFiniteGradient { tensor: k, index });
            }
        }

        self.step += 1;
        let cast = |x: f64| T::from(x).expect("representable constant");
        let b1 = cast(self.config.beta1);
        let b2 = cast(self.config.beta2);
        let one = T::one();
        let correction1 = one - cast(self.config.beta1.powi(self.step as i32));
        let correction2 = one - cast(self.config.beta2.powi(self.step as i32));
        let lr = cast(self.config.learning_rate);
        let eps = cast(self.config.epsilon);

        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first_moment[k].as_mut_slice();
            let v = self.second_moment[k].as_mut_slice();
            for (((theta, &gi), mi), vi) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m).zip(v) {
                *mi = b1 * *mi + (one - b1) * gi;
                *vi = b2 * *vi + (one - b2) * gi * gi;
                let m_hat = *mi / correction1;
                let v_hat = *vi / correction2;
                *theta = *theta - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> Matrix<f64> {
        Matrix::from_vec(1, 1, vec![x]).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut state = AdamState::new(AdamConfig::default(), &[(2, 2)]);
        let mut p = Matrix::from_vec(2, 2, vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let before = p.clone();
        let g = Matrix::zeros(2, 2);
        state.step(&mut [&mut p], &[&g]).unwrap();
        assert_eq!(p, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // t = 1: m = (1-b1) g, v = (1-b2) g^2, so m_hat = g and v_hat = g^2.
        let (lr, eps, g) = (0.001, 1e-8, 1.0f64);
        let expected = -lr * g / (g.abs() + eps);

        let mut state = AdamState::new(AdamConfig::default(), &[(1, 1)]);
        let mut p = scalar(0.0);
        state.step(&mut [&mut p], &[&scalar(g)]).unwrap();
        assert!((p[(0, 0)] - expected).abs() < 1e-15);
        assert!((p[(0, 0)] + 0.001).abs() < 1e-10);
    }

    #[test]
    fn two_steps_reduce_a_quadratic() {
        let loss = |x: f64| (x - 3.0).powi(2);
        let mut state = AdamState::new(AdamConfig::with_learning_rate(0.1), &[(1, 1)]);
        let mut p = scalar(0.0);
        let start = loss(p[(0, 0)]);
        let mut previous = start;
        for _ in 0..2 {
            let g = scalar(2.0 * (p[(0, 0)] - 3.0));
            state.step(&mut [&mut p], &[&g]).unwrap();
            let now = loss(p[(0, 0)]);
            assert!(now < previous);
            previous = now;
        }
    }

    #[test]
    fn nan_gradient_aborts_without_mutation() {
        let mut state = AdamState::new(AdamConfig::default(), &[(1, 2), (1, 1)]);
        let mut a = Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        let mut b = scalar(5.0);
        let ga = Matrix::from_vec(1, 2, vec![0.1, 0.2]).unwrap();
        let gb = scalar(f64::NAN);
        let err = state.step(&mut [&mut a, &mut b], &[&ga, &gb]).unwrap_err();
        assert_eq!(err, KernelError::NonFiniteGradient { tensor: 1, index: 0 });
        assert_eq!(a.as_slice(), &[1.0, 2.0]);
        assert_eq!(state.step, 0);
        assert!(state.first_moment[0].as_slice().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn deterministic_given_identical_inputs() {
        let run = || {
            let mut state = AdamState::new(AdamConfig::default(), &[(1, 3)]);
            let mut p = Matrix::from_vec(1, 3, vec![0.3, -0.2, 0.1]).unwrap();
            for t in 0..5 {
                let g = Matrix::from_vec(1, 3, vec![t as f64, -0.5, 1e-3]).unwrap();
                state.step(&mut [&mut p], &[&g]).unwrap();
            }
            (p, state)
        };
        let (p1, s1) = run();
        let (p2, s2) = run();
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
    }

    #[test]
    fn single_precision_step() {
        let mut state = AdamState::<f32>::new(AdamConfig::default(), &[(1, 1)]);
        let mut p = Matrix::<f32>::from_vec(1, 1, vec![1.0]).unwrap();
        let g = Matrix::<f32>::from_vec(1, 1, vec![-2.0]).unwrap();
        state.step(&mut [&mut p], &[&g]).unwrap();
        assert!((p[(0, 0)] - 1.001).abs() < 1e-6);
    }
}
