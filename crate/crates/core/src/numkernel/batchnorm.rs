use log::warn;

use super::{Matrix, Real};

/// Per-feature batch normalization over the rows of a matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T: Real = f64> {
    /// Learned scale, one per feature (`features × 1`).
    pub gamma: Matrix<T>,
    /// Learned shift, one per feature (`features × 1`).
    pub beta: Matrix<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: T,
    pub epsilon: T,
    pub training: bool,
}

/// What the backward pass needs from a forward evaluation.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T: Real = f64> {
    pub normalized: Matrix<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
    /// False when running statistics were used (inference, or a one-row batch).
    pub batch_statistics: bool,
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads<T: Real = f64> {
    pub input: Matrix<T>,
    pub gamma: Matrix<T>,
    pub beta: Matrix<T>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(features: usize) -> Self {
        BatchNorm {
            gamma: Matrix::from_fn(features, 1, |_, _| T::one()),
            beta: Matrix::zeros(features, 1),
            running_mean: vec![T::zero(); features],
            running_var: vec![T::one(); features],
            momentum: T::from(0.1).unwrap(),
            epsilon: T::from(1e-5).unwrap(),
            training: true,
        }
    }

    pub fn features(&self) -> usize {
        self.running_mean.len()
    }

    /// Normalizes `batch` according to the current mode, updating running
    /// statistics when training on a batch of at least two rows.
    pub fn apply(&mut self, batch: &Matrix<T>) -> Matrix<T> {
        let (out, cache) = self.forward(batch);
        if cache.batch_statistics {
            self.update_running(&cache);
        }
        out
    }

    /// Pure forward evaluation in the current mode; running statistics are
    /// left untouched.
    pub fn forward(&self, batch: &Matrix<T>) -> (Matrix<T>, BatchNormCache<T>) {
        self.forward_in_mode(batch, self.training)
    }

    pub fn forward_in_mode(&self, batch: &Matrix<T>, training: bool) -> (Matrix<T>, BatchNormCache<T>) {
        assert_eq!(batch.cols(), self.features(), "batch norm feature count");
        let n = batch.rows();
        let use_batch = training && n >= 2;
        if training && n < 2 {
            warn!("batch norm received a {n}-row batch in training mode; using running statistics");
        }

        let (mean, var) = if use_batch {
            column_moments(batch)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + self.epsilon).sqrt()).collect();

        let mut normalized = Matrix::zeros(n, batch.cols());
        let mut out = Matrix::zeros(n, batch.cols());
        for r in 0..n {
            for c in 0..batch.cols() {
                let xhat = (batch[(r, c)] - mean[c]) * inv_std[c];
                normalized[(r, c)] = xhat;
                out[(r, c)] = self.gamma[(c, 0)] * xhat + self.beta[(c, 0)];
            }
        }
        let cache = BatchNormCache {
            normalized,
            inv_std,
            mean,
            var,
            batch_statistics: use_batch,
        };
        (out, cache)
    }

    /// Moves the running statistics a `momentum` fraction toward the batch's.
    pub fn update_running(&mut self, cache: &BatchNormCache<T>) {
        let m = self.momentum;
        for c in 0..self.features() {
            self.running_mean[c] = (T::one() - m) * self.running_mean[c] + m * cache.mean[c];
            self.running_var[c] = (T::one() - m) * self.running_var[c] + m * cache.var[c];
        }
    }

    pub fn backward(&self, cache: &BatchNormCache<T>, grad_out: &Matrix<T>) -> BatchNormGrads<T> {
        let (n, f) = grad_out.shape();
        let mut dgamma = Matrix::zeros(f, 1);
        let mut dbeta = Matrix::zeros(f, 1);
        let mut dx = Matrix::zeros(n, f);
        for c in 0..f {
            let mut sum_dy = T::zero();
            let mut sum_dy_xhat = T::zero();
            for r in 0..n {
                sum_dy = sum_dy + grad_out[(r, c)];
                sum_dy_xhat = sum_dy_xhat + grad_out[(r, c)] * cache.normalized[(r, c)];
            }
            dgamma[(c, 0)] = sum_dy_xhat;
            dbeta[(c, 0)] = sum_dy;

            let scale = self.gamma[(c, 0)] * cache.inv_std[c];
            if cache.batch_statistics {
                let count = T::from(n).unwrap();
                for r in 0..n {
                    let xhat = cache.normalized[(r, c)];
                    dx[(r, c)] = scale * (grad_out[(r, c)] - sum_dy / count - xhat * sum_dy_xhat / count);
                }
            } else {
                for r in 0..n {
                    dx[(r, c)] = scale * grad_out[(r, c)];
                }
            }
        }
        BatchNormGrads {
            input: dx,
            gamma: dgamma,
            beta: dbeta,
        }
    }
}

/// Per-column mean and population variance.
fn column_moments<T: Real>(batch: &Matrix<T>) -> (Vec<T>, Vec<T>) {
    let (n, f) = batch.shape();
    let count = T::from(n).unwrap();
    let mut mean = vec![T::zero(); f];
    for r in 0..n {
        for (m, &x) in mean.iter_mut().zip(batch.row(r)) {
            *m = *m + x;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / count);
    let mut var = vec![T::zero(); f];
    for r in 0..n {
        for c in 0..f {
            let d = batch[(r, c)] - mean[c];
            var[c] = var[c] + d * d;
        }
    }
    var.iter_mut().for_each(|v| *v = *v / count);
    (mean, var)
}
