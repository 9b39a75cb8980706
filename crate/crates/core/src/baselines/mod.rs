//! Matrix-factorization baselines trained with the same pairwise harness:
//! BPR-MF (`r̂ = v_iᵀu_a`) and SVD++ with a mean-of-rated-items implicit term.

mod bpr;
mod svdpp;

pub use bpr::{bpr_predict, BprMf};
pub use svdpp::{svdpp_predict, SvdPlusPlus};

use rand::Rng;

use crate::error::ModelError;
use crate::numkernel::Matrix;
use crate::seeds::{self, streams};

/// Uniform in ±0.1/√D, matching the diffusion model's free embeddings.
fn embedding_tables(rows: &[usize], dim: usize, seed: u64) -> Vec<Matrix> {
    let mut rng = seeds::stream(seed, streams::INIT, 0);
    let scale = 0.1 / (dim as f64).sqrt();
    rows.iter()
        .map(|&r| Matrix::from_fn(r, dim, |_, _| rng.random_range(-scale..=scale)))
        .collect()
}

fn check_ids(users: usize, items: usize, user: usize, item: usize) -> Result<(), ModelError> {
    if user >= users {
        return Err(ModelError::UnknownId { kind: "user", id: user });
    }
    if item >= items {
        return Err(ModelError::UnknownId { kind: "item", id: item });
    }
    Ok(())
}

fn check_table(name: &str, t: &Matrix, rows: usize, dim: usize) -> Result<(), ModelError> {
    if t.shape() != (rows, dim) {
        return Err(ModelError::ShapeMismatch {
            expected: format!("{name}: {rows}x{dim}"),
            actual: format!("{name}: {}x{}", t.rows(), t.cols()),
        });
    }
    Ok(())
}
