//! Read-only scoring interface shared by evaluation and recommendation.

use crate::numkernel::{dot, Matrix};

/// Anything that can score a (user, item) pair at fixed parameters.
pub trait Scorer: Sync {
    fn num_users(&self) -> usize;
    fn num_items(&self) -> usize;
    fn score(&self, user: usize, item: usize) -> f64;
}

/// Final user and item vectors; scores are their inner products.
#[derive(Clone, Debug, PartialEq)]
pub struct Factors {
    /// `M × D`.
    pub users: Matrix,
    /// `N × D`.
    pub items: Matrix,
}

impl Scorer for Factors {
    fn num_users(&self) -> usize {
        self.users.rows()
    }

    fn num_items(&self) -> usize {
        self.items.rows()
    }

    fn score(&self, user: usize, item: usize) -> f64 {
        dot(self.users.row(user), self.items.row(item))
    }
}
