//! Sampled top-N ranking evaluation.
//!
//! Each user's held-out positives are ranked against a fresh sample of items
//! she never interacted with; HR@N and NDCG@N are averaged over users and
//! then over repetitions, overall and per training-sparsity bucket.

mod metrics;
mod report;

pub use metrics::{hit_ranks, ndcg_at, rank_user, UserRanking};
pub use report::{write_results, Metric, ResultRow};

use rand::seq::index;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::{bucket_labels, bucket_users, DataError, Dataset};
use crate::scoring::Scorer;
use crate::seeds;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid evaluation configuration: {0}")]
    Config(String),
    #[error("no user has held-out positives to rank")]
    NothingToRank,
    #[error("scorer covers {scorer} but the dataset has {dataset}")]
    ShapeMismatch { scorer: String, dataset: String },
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub top_n: Vec<usize>,
    pub num_sampled_negatives: usize,
    pub num_repetitions: usize,
    pub rng_seed: u64,
    /// Sparsity bucket boundaries on training-positive counts; empty for none.
    pub bucket_boundaries: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            top_n: vec![5, 10, 15],
            num_sampled_negatives: 1000,
            num_repetitions: 10,
            rng_seed: 0,
            bucket_boundaries: Vec::new(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.top_n.is_empty() || self.top_n.contains(&0) {
            return Err(EvalError::Config("top_n needs at least one positive cutoff".into()));
        }
        if self.num_repetitions == 0 {
            return Err(EvalError::Config("num_repetitions must be at least 1".into()));
        }
        if self.bucket_boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EvalError::Config("bucket boundaries must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// Per-cutoff means for one group of users within one repetition.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupMetrics {
    pub users: usize,
    /// One entry per cutoff in [`EvalConfig::top_n`] order.
    pub hr: Vec<f64>,
    pub ndcg: Vec<f64>,
}

impl GroupMetrics {
    fn empty(cutoffs: usize) -> Self {
        GroupMetrics {
            users: 0,
            hr: vec![0.0; cutoffs],
            ndcg: vec![0.0; cutoffs],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Repetition {
    pub overall: GroupMetrics,
    pub buckets: Vec<GroupMetrics>,
    /// `(user, 1-based ranks of her held-out positives)` for every ranked user.
    pub hit_ranks: Vec<(usize, Vec<usize>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankingResult {
    pub top_n: Vec<usize>,
    pub bucket_labels: Vec<String>,
    pub repetitions: Vec<Repetition>,
}

impl RankingResult {
    fn cutoff(&self, n: usize) -> usize {
        self.top_n
            .iter()
            .position(|&c| c == n)
            .unwrap_or_else(|| panic!("cutoff {n} was not evaluated"))
    }

    fn mean_over_reps(&self, pick: impl Fn(&Repetition) -> Option<f64>) -> f64 {
        let values: Vec<f64> = self.repetitions.iter().filter_map(pick).collect();
        if values.is_empty() {
            return 0.0;
        }
        values.iter().sum::<f64>() / values.len() as f64
    }

    pub fn hr(&self, n: usize) -> f64 {
        let c = self.cutoff(n);
        self.mean_over_reps(|r| Some(r.overall.hr[c]))
    }

    pub fn ndcg(&self, n: usize) -> f64 {
        let c = self.cutoff(n);
        self.mean_over_reps(|r| Some(r.overall.ndcg[c]))
    }

    /// Mean over repetitions for one bucket; `None` when the bucket is empty.
    pub fn bucket_metric(&self, bucket: usize, metric: Metric, n: usize) -> Option<f64> {
        let c = self.cutoff(n);
        if self.repetitions.iter().all(|r| r.buckets[bucket].users == 0) {
            return None;
        }
        Some(self.mean_over_reps(|r| {
            let g = &r.buckets[bucket];
            (g.users > 0).then(|| match metric {
                Metric::Hr => g.hr[c],
                Metric::Ndcg => g.ndcg[c],
            })
        }))
    }

    pub fn ranked_users(&self) -> usize {
        self.repetitions.first().map_or(0, |r| r.overall.users)
    }
}

fn known_items(known: &[&Dataset], target: &Dataset, user: usize) -> Vec<usize> {
    let mut all: Vec<usize> = known
        .iter()
        .chain([&target])
        .flat_map(|d| d.items_of(user).iter().copied())
        .collect();
    all.sort_unstable();
    all.dedup();
    all
}

/// Samples up to `count` distinct items outside the sorted `known` list.
fn sample_unrated(num_items: usize, known: &[usize], count: usize, rng: &mut seeds::StreamRng) -> Vec<usize> {
    let available = num_items - known.len();
    let take = count.min(available);
    if take == 0 {
        return Vec::new();
    }
    let slots = index::sample(rng, available, take);
    // map the k-th unrated slot to its item id
    let mut slots: Vec<usize> = slots.into_iter().collect();
    slots.sort_unstable();
    let mut out = Vec::with_capacity(take);
    let mut known_iter = known.iter().peekable();
    let mut skipped = 0;
    for slot in slots {
        // item = slot + number of known items <= item
        let mut item = slot + skipped;
        while let Some(&&k) = known_iter.peek() {
            if k <= item {
                skipped += 1;
                item += 1;
                known_iter.next();
            } else {
                break;
            }
        }
        out.push(item);
    }
    out
}

/// Ranks every user's `target` positives against sampled unrated items.
///
/// Positives of `target` and of every dataset in `known` count as rated and
/// are never drawn as negatives; `train` drives the sparsity buckets.
pub fn evaluate(
    scorer: &(impl Scorer + ?Sized),
    target: &Dataset,
    known: &[&Dataset],
    train: &Dataset,
    config: &EvalConfig,
) -> Result<RankingResult, EvalError> {
    config.validate()?;
    if scorer.num_users() != target.num_users() || scorer.num_items() != target.num_items() {
        return Err(EvalError::ShapeMismatch {
            scorer: format!("{} users × {} items", scorer.num_users(), scorer.num_items()),
            dataset: format!("{} users × {} items", target.num_users(), target.num_items()),
        });
    }
    let users: Vec<usize> = (0..target.num_users())
        .filter(|&u| !target.items_of(u).is_empty())
        .collect();
    if users.is_empty() {
        return Err(EvalError::NothingToRank);
    }
    let max_positives = users.iter().map(|&u| target.items_of(u).len()).max().unwrap_or(0);
    if let Some(&n) = config.top_n.iter().find(|&&n| n > config.num_sampled_negatives + max_positives) {
        return Err(EvalError::Config(format!(
            "cutoff {n} exceeds the candidate list size {}",
            config.num_sampled_negatives + max_positives
        )));
    }
    let buckets = bucket_users(train, &config.bucket_boundaries)?;
    let labels = if config.bucket_boundaries.is_empty() {
        Vec::new()
    } else {
        bucket_labels(&config.bucket_boundaries)?
    };
    let num_buckets = labels.len();
    let cutoffs = config.top_n.len();

    let mut repetitions = Vec::with_capacity(config.num_repetitions);
    for rep in 0..config.num_repetitions {
        let rep_seed = seeds::derive_seed(config.rng_seed, seeds::streams::EVAL, rep as u64);
        let per_user: Vec<(usize, Vec<usize>)> = users
            .par_iter()
            .map(|&user| {
                let mut rng = seeds::stream(rep_seed, "eval-user", user as u64);
                let rated = known_items(known, target, user);
                let negatives = sample_unrated(target.num_items(), &rated, config.num_sampled_negatives, &mut rng);
                let positives = target.items_of(user);
                let candidates: Vec<(usize, f64)> = positives
                    .iter()
                    .chain(&negatives)
                    .map(|&i| (i, scorer.score(user, i)))
                    .collect();
                (user, hit_ranks(&candidates, positives))
            })
            .collect();

        let mut overall = GroupMetrics::empty(cutoffs);
        let mut groups = vec![GroupMetrics::empty(cutoffs); num_buckets];
        for (user, ranks) in &per_user {
            let positives = target.items_of(*user).len();
            let add = |g: &mut GroupMetrics| {
                g.users += 1;
                for (c, &n) in config.top_n.iter().enumerate() {
                    let r = rank_user(ranks, positives, n);
                    g.hr[c] += r.hr;
                    g.ndcg[c] += r.ndcg;
                }
            };
            add(&mut overall);
            if num_buckets > 0 {
                add(&mut groups[buckets[*user]]);
            }
        }
        for g in std::iter::once(&mut overall).chain(groups.iter_mut()) {
            if g.users > 0 {
                let k = g.users as f64;
                g.hr.iter_mut().for_each(|v| *v /= k);
                g.ndcg.iter_mut().for_each(|v| *v /= k);
            }
        }
        repetitions.push(Repetition {
            overall,
            buckets: groups,
            hit_ranks: per_user,
        });
    }
    Ok(RankingResult {
        top_n: config.top_n.clone(),
        bucket_labels: labels,
        repetitions,
    })
}

#[cfg(test)]
mod tests;
