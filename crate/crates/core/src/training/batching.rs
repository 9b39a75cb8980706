use std::ops::Range;

use log::warn;
use rand::Rng;

use crate::data::Dataset;

/// One (user, positive item, sampled negative item) triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrainPair {
    pub user: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Draws `neg_per_pos` negatives for every training positive, uniformly over
/// the items the user has not interacted with in `train`. Output is grouped
/// by user in ascending user order.
pub fn sample_pairs(train: &Dataset, neg_per_pos: usize, rng: &mut impl Rng) -> Vec<TrainPair> {
    let n = train.num_items();
    let mut pairs = Vec::with_capacity(train.num_interactions() * neg_per_pos);
    let mut complement: Vec<usize> = Vec::new();
    let mut saturated = 0;
    for user in 0..train.num_users() {
        let positives = train.items_of(user);
        if positives.is_empty() {
            continue;
        }
        if positives.len() >= n {
            saturated += 1;
            continue;
        }
        // dense users: draw from the explicit complement instead of rejecting
        let dense = positives.len() * 2 > n;
        if dense {
            complement.clear();
            complement.extend((0..n).filter(|i| positives.binary_search(i).is_err()));
        }
        for &positive in positives {
            for _ in 0..neg_per_pos {
                let negative = if dense {
                    complement[rng.random_range(0..complement.len())]
                } else {
                    loop {
                        let j = rng.random_range(0..n);
                        if positives.binary_search(&j).is_err() {
                            break j;
                        }
                    }
                };
                pairs.push(TrainPair {
                    user,
                    positive,
                    negative,
                });
            }
        }
    }
    if saturated > 0 {
        warn!("skipped {saturated} users who interacted with every item");
    }
    pairs
}

/// Splits user-grouped pairs into batches of about `batch_size` pairs
/// without splitting any user's group. A group larger than `batch_size`
/// becomes its own oversized batch.
pub fn make_batches(pairs: &[TrainPair], batch_size: usize) -> Vec<Range<usize>> {
    let mut batches = Vec::new();
    let mut start = 0;
    let mut group_start = 0;
    let batch_size = batch_size.max(1);
    while group_start < pairs.len() {
        let user = pairs[group_start].user;
        let mut group_end = group_start;
        while group_end < pairs.len() && pairs[group_end].user == user {
            group_end += 1;
        }
        let group_len = group_end - group_start;
        if group_len > batch_size {
            warn!("user {user} has {group_len} pairs, more than the batch size {batch_size}");
        }
        if group_end - start > batch_size && group_start > start {
            batches.push(start..group_start);
            start = group_start;
        }
        group_start = group_end;
    }
    if start < pairs.len() {
        batches.push(start..pairs.len());
    }
    batches
}
