use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::Dataset;
use super::{DataError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub validation_fraction: f64,
    pub rng_seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.1,
            validation_fraction: 0.1,
            rng_seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |f: f64| f > 0.0 && f < 1.0;
        if !in_unit(self.test_fraction) {
            return Err(DataError::Config(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if !(self.validation_fraction == 0.0 || in_unit(self.validation_fraction)) {
            return Err(DataError::Config(format!(
                "validation_fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        if self.test_fraction + self.validation_fraction >= 1.0 {
            return Err(DataError::Config("test_fraction + validation_fraction must be < 1".into()));
        }
        Ok(())
    }
}

/// A partition of one dataset's interactions. All three parts share the
/// trust graph, features and id maps of the source.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    /// Users whose held-out share would have emptied their training set;
    /// all of their interactions were kept in train.
    pub fallback_users: Vec<usize>,
}

impl Split {
    /// Union of the train, validation and test positives of `user`, sorted.
    pub fn known_items(&self, user: usize) -> Vec<usize> {
        let mut all: Vec<usize> = self
            .train
            .items_of(user)
            .iter()
            .chain(self.validation.items_of(user))
            .chain(self.test.items_of(user))
            .copied()
            .collect();
        all.sort_unstable();
        all
    }
}

/// Per-user stratified split. Each user's items are shuffled by one seeded
/// stream; `round(fraction * n)` go to test, then validation, the rest to
/// train.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let m = dataset.num_users();
    let (mut train, mut validation, mut test) = (vec![Vec::new(); m], vec![Vec::new(); m], vec![Vec::new(); m]);
    let mut fallback_users = Vec::new();

    for user in 0..m {
        let mut items = dataset.items_of(user).to_vec();
        if items.is_empty() {
            continue;
        }
        items.shuffle(&mut rng);
        let n = items.len();
        let n_test = (spec.test_fraction * n as f64).round() as usize;
        let n_val = (spec.validation_fraction * n as f64).round() as usize;
        if n_test + n_val >= n {
            fallback_users.push(user);
            train[user] = items;
            continue;
        }
        test[user] = items[..n_test].to_vec();
        validation[user] = items[n_test..n_test + n_val].to_vec();
        train[user] = items[n_test + n_val..].to_vec();
    }
    if !fallback_users.is_empty() {
        warn!(
            "{} users keep all interactions in train (too few to hold any out)",
            fallback_users.len()
        );
    }
    Ok(Split {
        train: dataset.with_interactions(train),
        validation: dataset.with_interactions(validation),
        test: dataset.with_interactions(test),
        fallback_users,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_user(n: usize) -> Dataset {
        Dataset::from_parts(1, n, vec![(0..n).collect()], vec![vec![]], None, None).unwrap()
    }

    #[test]
    fn ten_percent_of_hundred() {
        let ds = single_user(100);
        let s = split(
            &ds,
            &SplitSpec {
                test_fraction: 0.1,
                validation_fraction: 0.1,
                rng_seed: 3,
            },
        )
        .unwrap();
        assert_eq!(s.test.num_interactions(), 10);
        assert_eq!(s.validation.num_interactions(), 10);
        assert_eq!(s.train.num_interactions(), 80);
    }

    #[test]
    fn two_interaction_user_at_half() {
        // Enumerate every seed-driven partition: whichever item is held out,
        // exactly one lands in train and one in test.
        let ds = single_user(2);
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..32 {
            let s = split(
                &ds,
                &SplitSpec {
                    test_fraction: 0.5,
                    validation_fraction: 0.0,
                    rng_seed: seed,
                },
            )
            .unwrap();
            assert_eq!(s.train.num_interactions(), 1);
            assert_eq!(s.test.num_interactions(), 1);
            seen.insert(s.test.items_of(0).to_vec());
        }
        assert_eq!(seen.len(), 2, "both partitions reachable");
    }

    #[test]
    fn tiny_users_fall_back_to_train() {
        let ds = single_user(1);
        let s = split(
            &ds,
            &SplitSpec {
                test_fraction: 0.5,
                validation_fraction: 0.0,
                rng_seed: 0,
            },
        )
        .unwrap();
        assert_eq!(s.train.items_of(0), &[0]);
        assert_eq!(s.fallback_users, vec![0]);
    }

    #[test]
    fn same_seed_same_split() {
        let ds = single_user(40);
        let spec = SplitSpec {
            rng_seed: 99,
            ..Default::default()
        };
        assert_eq!(split(&ds, &spec).unwrap(), split(&ds, &spec).unwrap());
    }

    #[test]
    fn rejects_bad_fractions() {
        let bad = SplitSpec {
            test_fraction: 0.6,
            validation_fraction: 0.4,
            rng_seed: 0,
        };
        assert!(bad.validate().is_err());
        assert!(SplitSpec {
            test_fraction: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
