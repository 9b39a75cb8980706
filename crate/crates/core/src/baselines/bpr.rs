use super::{check_ids, check_table, embedding_tables};
use crate::data::Dataset;
use crate::error::ModelError;
use crate::numkernel::{dot, Matrix};
use crate::scoring::Factors;
use crate::training::PairwiseModel;

/// Plain matrix factorization.
#[derive(Clone, Debug, PartialEq)]
pub struct BprMf {
    /// `M × D`.
    pub users: Matrix,
    /// `N × D`.
    pub items: Matrix,
}

/// `v_iᵀ u_a`.
pub fn bpr_predict(model: &BprMf, user: usize, item: usize) -> Result<f64, ModelError> {
    check_ids(model.users.rows(), model.items.rows(), user, item)?;
    Ok(dot(model.items.row(item), model.users.row(user)))
}

impl BprMf {
    pub fn new(num_users: usize, num_items: usize, dim: usize, seed: u64) -> Self {
        let mut t = embedding_tables(&[num_users, num_items], dim, seed).into_iter();
        BprMf {
            users: t.next().expect("two tables"),
            items: t.next().expect("two tables"),
        }
    }

    pub fn from_tables(users: Matrix, items: Matrix) -> Result<Self, ModelError> {
        if users.cols() != items.cols() {
            return Err(ModelError::ShapeMismatch {
                expected: format!("V with {} columns", users.cols()),
                actual: format!("V with {} columns", items.cols()),
            });
        }
        Ok(BprMf { users, items })
    }

    pub fn dim(&self) -> usize {
        self.users.cols()
    }

    pub fn check_dataset(&self, ds: &Dataset) -> Result<(), ModelError> {
        check_table("U", &self.users, ds.num_users(), self.dim())?;
        check_table("V", &self.items, ds.num_items(), self.dim())
    }

    pub fn trainable_names() -> Vec<String> {
        vec!["U".into(), "V".into()]
    }
}

impl PairwiseModel for BprMf {
    type Trace = ();

    fn forward_train(&mut self, train: &Dataset) -> Result<(), ModelError> {
        self.check_dataset(train)
    }

    fn trace_score(&self, _: &(), user: usize, item: usize) -> f64 {
        dot(self.items.row(item), self.users.row(user))
    }

    fn backward(&self, _: &(), _: &Dataset, score_grads: &[(usize, usize, f64)]) -> Result<Vec<Matrix>, ModelError> {
        let mut du = Matrix::zeros(self.users.rows(), self.dim());
        let mut dv = Matrix::zeros(self.items.rows(), self.dim());
        for &(a, i, g) in score_grads {
            check_ids(self.users.rows(), self.items.rows(), a, i)?;
            for (d, &v) in du.row_mut(a).iter_mut().zip(self.items.row(i)) {
                *d += g * v;
            }
            for (d, &u) in dv.row_mut(i).iter_mut().zip(self.users.row(a)) {
                *d += g * u;
            }
        }
        Ok(vec![du, dv])
    }

    fn trainable(&self) -> Vec<&Matrix> {
        vec![&self.users, &self.items]
    }

    fn trainable_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.users, &mut self.items]
    }

    fn regularized(&self) -> Vec<usize> {
        vec![0, 1]
    }

    fn factors(&self, train: &Dataset) -> Result<Factors, ModelError> {
        self.check_dataset(train)?;
        Ok(Factors {
            users: self.users.clone(),
            items: self.items.clone(),
        })
    }
}
