use super::{check_ids, check_table, embedding_tables};
use crate::data::Dataset;
use crate::error::ModelError;
use crate::numkernel::{dot, Matrix};
use crate::scoring::Factors;
use crate::training::PairwiseModel;

/// SVD++ for implicit feedback: `r̂ = v_iᵀ(u_a + (1/|R_a|) Σ_{j∈R_a} y_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SvdPlusPlus {
    /// `M × D`.
    pub users: Matrix,
    /// `N × D`.
    pub items: Matrix,
    /// Implicit item factors, `N × D`.
    pub implicit: Matrix,
}

fn user_vector(model: &SvdPlusPlus, train: &Dataset, user: usize, out: &mut [f64]) {
    out.copy_from_slice(model.users.row(user));
    let rated = train.items_of(user);
    if rated.is_empty() {
        return;
    }
    let mut sum = vec![0.0; out.len()];
    for &j in rated {
        for (s, &y) in sum.iter_mut().zip(model.implicit.row(j)) {
            *s += y;
        }
    }
    let k = rated.len() as f64;
    for (o, s) in out.iter_mut().zip(sum) {
        *o += s / k;
    }
}

/// Score of `item` for `user`, whose rated items are read from `train`.
pub fn svdpp_predict(model: &SvdPlusPlus, train: &Dataset, user: usize, item: usize) -> Result<f64, ModelError> {
    check_ids(model.users.rows(), model.items.rows(), user, item)?;
    model.check_dataset(train)?;
    let mut u = vec![0.0; model.dim()];
    user_vector(model, train, user, &mut u);
    Ok(dot(model.items.row(item), &u))
}

impl SvdPlusPlus {
    pub fn new(num_users: usize, num_items: usize, dim: usize, seed: u64) -> Self {
        let mut t = embedding_tables(&[num_users, num_items, num_items], dim, seed).into_iter();
        SvdPlusPlus {
            users: t.next().expect("three tables"),
            items: t.next().expect("three tables"),
            implicit: t.next().expect("three tables"),
        }
    }

    pub fn dim(&self) -> usize {
        self.users.cols()
    }

    pub fn check_dataset(&self, ds: &Dataset) -> Result<(), ModelError> {
        check_table("U", &self.users, ds.num_users(), self.dim())?;
        check_table("V", &self.items, ds.num_items(), self.dim())?;
        check_table("Yimp", &self.implicit, ds.num_items(), self.dim())
    }

    pub fn trainable_names() -> Vec<String> {
        vec!["U".into(), "V".into(), "Yimp".into()]
    }

    /// Composite user vectors `u_a + mean(y_j)`, one row per user.
    pub fn user_vectors(&self, train: &Dataset) -> Result<Matrix, ModelError> {
        self.check_dataset(train)?;
        let mut out = Matrix::zeros(self.users.rows(), self.dim());
        for a in 0..self.users.rows() {
            user_vector(self, train, a, out.row_mut(a));
        }
        Ok(out)
    }
}

impl PairwiseModel for SvdPlusPlus {
    /// Composite user vectors.
    type Trace = Matrix;

    fn forward_train(&mut self, train: &Dataset) -> Result<Matrix, ModelError> {
        self.user_vectors(train)
    }

    fn trace_score(&self, trace: &Matrix, user: usize, item: usize) -> f64 {
        dot(self.items.row(item), trace.row(user))
    }

    fn backward(
        &self,
        trace: &Matrix,
        train: &Dataset,
        score_grads: &[(usize, usize, f64)],
    ) -> Result<Vec<Matrix>, ModelError> {
        let d = self.dim();
        let mut du = Matrix::zeros(self.users.rows(), d);
        let mut dv = Matrix::zeros(self.items.rows(), d);
        let mut dy = Matrix::zeros(self.items.rows(), d);
        for &(a, i, g) in score_grads {
            check_ids(self.users.rows(), self.items.rows(), a, i)?;
            // du collects ∂/∂(composite user vector) first
            for (x, &v) in du.row_mut(a).iter_mut().zip(self.items.row(i)) {
                *x += g * v;
            }
            for (x, &u) in dv.row_mut(i).iter_mut().zip(trace.row(a)) {
                *x += g * u;
            }
        }
        for a in 0..self.users.rows() {
            let rated = train.items_of(a);
            if rated.is_empty() {
                continue;
            }
            let k = rated.len() as f64;
            let share: Vec<f64> = du.row(a).iter().map(|&x| x / k).collect();
            if share.iter().all(|&x| x == 0.0) {
                continue;
            }
            for &j in rated {
                for (y, &s) in dy.row_mut(j).iter_mut().zip(&share) {
                    *y += s;
                }
            }
        }
        Ok(vec![du, dv, dy])
    }

    fn trainable(&self) -> Vec<&Matrix> {
        vec![&self.users, &self.items, &self.implicit]
    }

    fn trainable_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.users, &mut self.items, &mut self.implicit]
    }

    fn regularized(&self) -> Vec<usize> {
        vec![0, 1, 2]
    }

    fn factors(&self, train: &Dataset) -> Result<Factors, ModelError> {
        Ok(Factors {
            users: self.user_vectors(train)?,
            items: self.items.clone(),
        })
    }
}
