use rand::Rng;
use rand_distr::StandardNormal;

use crate::numkernel::Matrix;
use crate::seeds::{self, streams};

use super::dataset::Dataset;
use super::{DataError, Result};

/// Parameters of the planted-preference social dataset generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub num_users: usize,
    pub num_items: usize,
    /// Target mean out-degree of the trust graph.
    pub avg_degree: f64,
    /// Weight of the trusted users' mean in each user's planted vector.
    pub homophily_strength: f64,
    pub latent_dim: usize,
    pub positives_per_user: usize,
    /// Standard deviation of the Gaussian noise added to planted vectors to
    /// form the feature matrices.
    pub feature_noise: f64,
    /// Users are dealt round-robin into this many communities and attach
    /// mostly within their own; 1 gives a single global pool.
    pub communities: usize,
    /// Probability that an edge ignores community membership.
    pub cross_community_rate: f64,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_users: 200,
            num_items: 500,
            avg_degree: 8.0,
            homophily_strength: 0.8,
            latent_dim: 8,
            positives_per_user: 20,
            feature_noise: 0.5,
            communities: 10,
            cross_community_rate: 0.1,
            rng_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(DataError::Config(msg));
        if self.num_users < 2 || self.num_items < 1 {
            return fail("synthetic data needs at least 2 users and 1 item".into());
        }
        if !(self.avg_degree >= 0.0 && self.avg_degree < self.num_users as f64) {
            return fail(format!("avg_degree {} must be in [0, num_users)", self.avg_degree));
        }
        if !(0.0..=1.0).contains(&self.homophily_strength) {
            return fail(format!("homophily_strength {} outside [0, 1]", self.homophily_strength));
        }
        if self.latent_dim == 0 {
            return fail("latent_dim must be positive".into());
        }
        if self.positives_per_user > self.num_items {
            return fail("positives_per_user exceeds num_items".into());
        }
        if !(self.feature_noise >= 0.0) {
            return fail("feature_noise must be >= 0".into());
        }
        if self.communities == 0 {
            return fail("communities must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.cross_community_rate) {
            return fail(format!("cross_community_rate {} outside [0, 1]", self.cross_community_rate));
        }
        Ok(())
    }
}

/// A generated dataset together with the vectors it was planted from.
#[derive(Clone, Debug)]
pub struct Synthetic {
    pub dataset: Dataset,
    /// One planted preference vector per user (`num_users × latent_dim`).
    pub user_vectors: Matrix,
    /// One planted attribute vector per item (`num_items × latent_dim`).
    pub item_vectors: Matrix,
}

/// Generates a social dataset with planted homophily.
///
/// Users arrive in index order and trust earlier users chosen by
/// preferential attachment (probability ∝ in-degree + 1), drawn from the
/// user's own community except with probability `cross_community_rate`. A user's planted
/// vector is `h · mean(trusted users' vectors) + (1 − h) · z` with `z`
/// standard normal; since trusted users always come first, the vectors are
/// computed exactly in one pass. Positives are the top-scoring items under
/// the planted inner product, and features are noisy copies of the planted
/// vectors.
pub fn synthesize(config: &SynthConfig) -> Result<Synthetic> {
    config.validate()?;
    let m = config.num_users;
    let n = config.num_items;
    let dim = config.latent_dim;
    let h = config.homophily_strength;
    let mut rng = seeds::stream(config.rng_seed, streams::SYNTH, 0);

    let trust = attach_edges(config, &mut rng);

    let mut user_vectors = Matrix::zeros(m, dim);
    for a in 0..m {
        let own: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let trusted = &trust[a];
        if trusted.is_empty() {
            user_vectors.row_mut(a).copy_from_slice(&own);
            continue;
        }
        let mut mean = vec![0.0; dim];
        for &b in trusted {
            for (acc, &v) in mean.iter_mut().zip(user_vectors.row(b)) {
                *acc += v;
            }
        }
        let count = trusted.len() as f64;
        let row = user_vectors.row_mut(a);
        for c in 0..dim {
            let neighbor = mean[c] / count;
            row[c] = if h == 1.0 { neighbor } else { h * neighbor + (1.0 - h) * own[c] };
        }
    }

    let item_vectors = Matrix::from_fn(n, dim, |_, _| rng.sample(StandardNormal));

    let mut interactions = Vec::with_capacity(m);
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(n);
    for a in 0..m {
        scored.clear();
        let ua = user_vectors.row(a);
        scored.extend((0..n).map(|i| (crate::numkernel::dot(ua, item_vectors.row(i)), i)));
        scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        interactions.push(scored[..config.positives_per_user].iter().map(|&(_, i)| i).collect());
    }

    let noisy = |src: &Matrix, rng: &mut seeds::StreamRng| {
        let mut out = src.clone();
        if config.feature_noise > 0.0 {
            for v in out.as_mut_slice() {
                let e: f64 = rng.sample(StandardNormal);
                *v += config.feature_noise * e;
            }
        }
        out
    };
    let user_features = noisy(&user_vectors, &mut rng);
    let item_features = noisy(&item_vectors, &mut rng);

    let dataset = Dataset::from_parts(m, n, interactions, trust, Some(user_features), Some(item_features))?;
    Ok(Synthetic {
        dataset,
        user_vectors,
        item_vectors,
    })
}

/// Directed preferential attachment toward earlier users. The total edge
/// count is `round(avg_degree · M)`; the shortfall of the community roots
/// and of the first few users, who have fewer predecessors than the target
/// degree, is handed to later users with spare capacity.
fn attach_edges(config: &SynthConfig, rng: &mut seeds::StreamRng) -> Vec<Vec<usize>> {
    let m = config.num_users;
    let total = (config.avg_degree * m as f64).round() as usize;
    let base = config.avg_degree.floor() as usize;
    let frac = config.avg_degree - base as f64;

    // each community's first member is a root with no out-edges
    let capacity = |a: usize| if a < config.communities { 0 } else { a };
    let mut quota: Vec<usize> = (0..m)
        .map(|a| {
            let want = base + usize::from(rng.random::<f64>() < frac);
            want.min(capacity(a))
        })
        .collect();
    let mut assigned: usize = quota.iter().sum();
    while assigned < total {
        let open: Vec<usize> = (0..m).filter(|&a| quota[a] < capacity(a)).collect();
        if open.is_empty() {
            break;
        }
        let a = open[rng.random_range(0..open.len())];
        quota[a] += 1;
        assigned += 1;
    }
    while assigned > total {
        let busy: Vec<usize> = (0..m).filter(|&a| quota[a] > 0).collect();
        let a = busy[rng.random_range(0..busy.len())];
        quota[a] -= 1;
        assigned -= 1;
    }

    let mut in_degree = vec![0usize; m];
    let mut trust = vec![Vec::new(); m];
    for a in 1..m {
        let mut chosen: Vec<usize> = Vec::with_capacity(quota[a]);
        while chosen.len() < quota[a] {
            let community = a % config.communities;
            let local = rng.random::<f64>() >= config.cross_community_rate
                && (0..a).any(|b| b % config.communities == community && !chosen.contains(&b));
            let open = |b: &usize| !chosen.contains(b) && (!local || b % config.communities == community);
            let weight_total: usize = (0..a).filter(open).map(|b| in_degree[b] + 1).sum();
            let mut ticket = rng.random_range(0..weight_total);
            for b in (0..a).filter(open) {
                let w = in_degree[b] + 1;
                if ticket < w {
                    chosen.push(b);
                    break;
                }
                ticket -= w;
            }
        }
        for &b in &chosen {
            in_degree[b] += 1;
        }
        chosen.sort_unstable();
        trust[a] = chosen;
    }
    trust
}
