use std::cmp::Ordering;

/// One user's contribution at a single cutoff.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UserRanking {
    /// Held-out positives inside the top N.
    pub hits: usize,
    /// `hits / |positives|`.
    pub hr: f64,
    pub ndcg: f64,
}

/// Sorts `(item, score)` candidates by descending score, breaking ties by
/// ascending item id, and returns the 1-based ranks of `positives` in
/// increasing order.
pub fn hit_ranks(candidates: &[(usize, f64)], positives: &[usize]) -> Vec<usize> {
    let mut order: Vec<(usize, f64)> = candidates.to_vec();
    order.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    let mut ranks: Vec<usize> = order
        .iter()
        .enumerate()
        .filter(|(_, (item, _))| positives.contains(item))
        .map(|(r, _)| r + 1)
        .collect();
    ranks.sort_unstable();
    ranks
}

fn gain(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// NDCG@n for hits at the given 1-based ranks out of `positives` relevant items.
pub fn ndcg_at(ranks: &[usize], positives: usize, n: usize) -> f64 {
    let ideal: f64 = (1..=positives.min(n)).map(gain).sum();
    if ideal == 0.0 {
        return 0.0;
    }
    let dcg: f64 = ranks.iter().filter(|&&r| r <= n).map(|&r| gain(r)).sum();
    dcg / ideal
}

/// HR@n and NDCG@n from a user's sorted hit ranks.
pub fn rank_user(ranks: &[usize], positives: usize, n: usize) -> UserRanking {
    let hits = ranks.iter().filter(|&&r| r <= n).count();
    let hr = if positives == 0 { 0.0 } else { hits as f64 / positives as f64 };
    UserRanking {
        hits,
        hr,
        ndcg: ndcg_at(ranks, positives, n),
    }
}
