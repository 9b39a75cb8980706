use crate::numkernel::Matrix;

/// `−ln σ(d)`, evaluated stably for both tails.
#[inline]
pub fn pair_loss(diff: f64) -> f64 {
    // softplus(−d) = max(−d, 0) + ln(1 + e^{−|d|})
    (-diff).max(0.0) + (-diff.abs()).exp().ln_1p()
}

/// `∂(−ln σ(d))/∂d = −(1 − σ(d)) = −σ(−d)`.
#[inline]
fn pair_loss_grad(diff: f64) -> f64 {
    let s = if diff >= 0.0 {
        let e = (-diff).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + diff.exp())
    };
    -s
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseLoss {
    /// Logistic term plus the L2 penalty.
    pub total: f64,
    pub ranking: f64,
    pub penalty: f64,
    /// `∂total/∂(r̂_ai − r̂_aj)` for each pair.
    pub diff_grads: Vec<f64>,
}

/// `Σ −ln σ(r̂_ai − r̂_aj) + λ Σ ‖T‖²_F` over `scores = [(r̂_ai, r̂_aj)]` and
/// the regularized tensors.
pub fn pairwise_loss(scores: &[(f64, f64)], regularized: &[&Matrix], lambda: f64) -> PairwiseLoss {
    let mut ranking = 0.0;
    let mut diff_grads = Vec::with_capacity(scores.len());
    for &(pos, neg) in scores {
        let d = pos - neg;
        ranking += pair_loss(d);
        diff_grads.push(pair_loss_grad(d));
    }
    let penalty = if lambda == 0.0 {
        0.0
    } else {
        lambda * regularized.iter().map(|t| t.squared_norm()).sum::<f64>()
    };
    PairwiseLoss {
        total: ranking + penalty,
        ranking,
        penalty,
        diff_grads,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_difference_costs_ln_two() {
        let l = pairwise_loss(&[(0.3, 0.3)], &[], 0.0);
        assert!((l.total - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((l.total - 0.693147).abs() < 1e-6);
        assert_eq!(l.diff_grads, vec![-0.5]);
    }

    #[test]
    fn logistic_tails() {
        assert!(pair_loss(50.0) < 1e-20);
        assert!((pair_loss(-50.0) - 50.0).abs() < 1e-12);
        assert!(pair_loss(-1000.0).is_finite());
        assert_eq!(pair_loss_grad(1000.0), -0.0);
        assert_eq!(pair_loss_grad(-1000.0), -1.0);
    }

    #[test]
    fn two_pair_batch() {
        // −ln σ(0.5) = ln(1 + e^{−0.5}), −ln σ(−0.5) = ln(1 + e^{0.5})
        let oracle = (1.0 + (-0.5f64).exp()).ln() + (1.0 + 0.5f64.exp()).ln();
        let l = pairwise_loss(&[(0.5, 0.0), (0.0, 0.5)], &[], 0.0);
        assert!((l.total - oracle).abs() < 1e-12);
        assert!((l.total - 1.448154).abs() < 1e-6);
        assert!((pair_loss(0.5) - 0.474077).abs() < 1e-6);
        assert!((pair_loss(-0.5) - 0.974077).abs() < 1e-6);
    }

    #[test]
    fn penalty_covers_only_given_tensors() {
        let p = Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        let q = Matrix::from_vec(1, 1, vec![3.0]).unwrap();
        let l = pairwise_loss(&[(1.0, 1.0)], &[&p, &q], 0.5);
        assert!((l.penalty - 0.5 * 14.0).abs() < 1e-15);
        assert!((l.total - (std::f64::consts::LN_2 + 7.0)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn loss_is_positive_and_convex_under_swap(d in -40.0f64..40.0) {
            prop_assert!(pair_loss(d) > 0.0);
            prop_assert!(pair_loss(d) + pair_loss(-d) >= 2.0 * std::f64::consts::LN_2 - 1e-12);
        }

        #[test]
        fn gradient_matches_finite_difference(d in -20.0f64..20.0) {
            let h = 1e-5;
            let fd = (pair_loss(d + h) - pair_loss(d - h)) / (2.0 * h);
            prop_assert!((fd - pair_loss_grad(d)).abs() < 1e-8);
        }
    }
}
