use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

struct Table {
    scores: Vec<Vec<f64>>,
}

impl Scorer for Table {
    fn num_users(&self) -> usize {
        self.scores.len()
    }
    fn num_items(&self) -> usize {
        self.scores[0].len()
    }
    fn score(&self, user: usize, item: usize) -> f64 {
        self.scores[user][item]
    }
}

fn ds(users: usize, items: usize, lists: Vec<Vec<usize>>) -> Dataset {
    Dataset::from_parts(users, items, lists, vec![Vec::new(); users], None, None).unwrap()
}

/// Counts the candidates that beat each positive instead of sorting.
fn brute_force(candidates: &[(usize, f64)], positives: &[usize], n: usize) -> (usize, f64) {
    let mut ranks = Vec::new();
    for &(item, score) in candidates {
        if !positives.contains(&item) {
            continue;
        }
        let ahead = candidates
            .iter()
            .filter(|&&(j, s)| s > score || (s == score && j < item))
            .count();
        ranks.push(ahead + 1);
    }
    let hits = ranks.iter().filter(|&&r| r <= n).count();
    // walk positions 1..=n in order, as the textbook definition does
    let mut dcg = 0.0;
    for pos in 1..=n {
        if ranks.contains(&pos) {
            dcg += 1.0 / ((pos + 1) as f64).log2();
        }
    }
    let mut idcg = 0.0;
    for r in 1..=positives.len() {
        if r <= n {
            idcg += 1.0 / ((r + 1) as f64).log2();
        }
    }
    (hits, dcg / idcg)
}

#[test]
fn single_positive_examples() {
    let r = rank_user(&[1], 1, 10);
    assert_eq!((r.hits, r.hr, r.ndcg), (1, 1.0, 1.0));
    assert_eq!(rank_user(&[3], 1, 10).ndcg, 0.5);
    assert_eq!(rank_user(&[11], 1, 10).ndcg, 0.0);
}

#[test]
fn two_positive_example() {
    let r = rank_user(&[1, 4], 2, 5);
    assert_eq!(r.hits, 2);
    assert!((r.ndcg - 0.877216).abs() < 1e-6, "{}", r.ndcg);
}

#[test]
fn ties_break_by_item_id() {
    let candidates = [(7, 0.5), (2, 0.5), (4, 0.9)];
    assert_eq!(hit_ranks(&candidates, &[7]), vec![3]);
    assert_eq!(hit_ranks(&candidates, &[2]), vec![2]);
}

#[test]
fn sampled_negatives_skip_known_items() {
    let mut rng = seeds::stream(3, "t", 0);
    let known = vec![0, 2, 3, 9];
    for _ in 0..50 {
        let s = sample_unrated(10, &known, 6, &mut rng);
        let mut sorted = s.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 6);
        assert!(s.iter().all(|i| !known.contains(i) && *i < 10));
    }
    let all = sample_unrated(10, &known, 100, &mut rng);
    assert_eq!(all, vec![1, 4, 5, 6, 7, 8]);
}

#[test]
fn oracle_scorer_hits_everything() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (users, items) = (30, 200);
    let mut test = Vec::new();
    let mut train = Vec::new();
    for _ in 0..users {
        let mut t: Vec<usize> = (0..rng.random_range(1..=10)).map(|_| rng.random_range(0..100)).collect();
        t.sort_unstable();
        t.dedup();
        test.push(t);
        train.push(vec![150, 151]);
    }
    let scores = (0..users)
        .map(|u| (0..items).map(|i| if test[u].contains(&i) { 1.0 } else { 0.0 }).collect())
        .collect();
    let test = ds(users, items, test);
    let train = ds(users, items, train);
    let config = EvalConfig {
        num_sampled_negatives: 100,
        num_repetitions: 3,
        ..EvalConfig::default()
    };
    let table = Table { scores };
    let r = evaluate(&table, &test, &[&train, &test], &train, &config).unwrap();
    assert_eq!(r.hr(10), 1.0);
    assert_eq!(r.ndcg(10), 1.0);
    assert_eq!(r.ranked_users(), users);
    // target positives are never drawn as negatives, even when not listed as known
    let alone = evaluate(&table, &test, &[], &train, &config).unwrap();
    assert_eq!(alone.hr(10), 1.0);
    assert_eq!(alone.ndcg(10), 1.0);
}

#[test]
fn random_scorer_matches_hypergeometric_expectation() {
    let (users, items) = (400, 1101);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let test: Vec<Vec<usize>> = (0..users).map(|_| vec![rng.random_range(0..items)]).collect();
    let scores = (0..users)
        .map(|_| (0..items).map(|_| rng.random::<f64>()).collect())
        .collect();
    let test = ds(users, items, test);
    let config = EvalConfig {
        num_repetitions: 10,
        top_n: vec![10],
        ..EvalConfig::default()
    };
    let r = evaluate(&Table { scores }, &test, &[&test], &test, &config).unwrap();
    let p = 10.0 / 1001.0;
    // fixed scores: repetitions only reshuffle negatives, so treat users as the sample
    let sigma = (p * (1.0 - p) / users as f64).sqrt();
    assert!((r.hr(10) - p).abs() < 3.0 * sigma, "hr {} vs {p}", r.hr(10));
}

#[test]
fn identical_seeds_give_identical_results() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (users, items) = (20, 300);
    let test: Vec<Vec<usize>> = (0..users).map(|_| vec![rng.random_range(0..items)]).collect();
    let scores: Vec<Vec<f64>> = (0..users)
        .map(|_| (0..items).map(|_| rng.random::<f64>()).collect())
        .collect();
    let test = ds(users, items, test);
    let config = EvalConfig {
        num_sampled_negatives: 50,
        bucket_boundaries: vec![1, 2],
        ..EvalConfig::default()
    };
    let table = Table { scores };
    let a = evaluate(&table, &test, &[&test], &test, &config).unwrap();
    let b = evaluate(&table, &test, &[&test], &test, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(write_results(&a.rows("m")), write_results(&b.rows("m")));
}

#[test]
fn users_without_positives_are_skipped() {
    let test = ds(3, 30, vec![vec![1], vec![], vec![2]]);
    let table = Table { scores: vec![vec![0.0; 30]; 3] };
    let config = EvalConfig { num_sampled_negatives: 20, ..EvalConfig::default() };
    let r = evaluate(&table, &test, &[&test], &test, &config).unwrap();
    assert_eq!(r.ranked_users(), 2);
    let empty = ds(3, 30, vec![vec![]; 3]);
    assert!(matches!(
        evaluate(&table, &empty, &[&empty], &empty, &config),
        Err(EvalError::NothingToRank)
    ));
}

#[test]
fn bucket_rows_carry_labels() {
    let train = ds(4, 400, vec![vec![1; 0], (0..20).collect(), (0..70).collect(), (0..300).collect()]);
    let test = ds(4, 400, vec![vec![399], vec![399], vec![399], vec![399]]);
    let table = Table { scores: vec![vec![0.0; 400]; 4] };
    let config = EvalConfig {
        num_sampled_negatives: 20,
        bucket_boundaries: vec![16, 64, 256],
        num_repetitions: 2,
        ..EvalConfig::default()
    };
    let r = evaluate(&table, &test, &[&train, &test], &train, &config).unwrap();
    let text = write_results(&r.rows("stub"));
    for label in ["[0,16)", "[16,64)", "[64,256)", "[256,∞)"] {
        assert!(text.contains(&format!("\t{label}\tmean\t")), "{label} missing");
    }
    // every item's score is tied, the held-out item has the largest id
    assert_eq!(r.hr(5), 0.0);
}

fn candidate_case() -> impl Strategy<Value = (Vec<(usize, f64)>, Vec<usize>, usize)> {
    (2usize..=20).prop_flat_map(|size| {
        (
            proptest::collection::vec(0u8..6, size),
            proptest::collection::vec(any::<bool>(), size),
            1usize..=size,
        )
            .prop_map(move |(levels, flags, n)| {
                // coarse scores so ties are frequent
                let candidates: Vec<(usize, f64)> =
                    levels.iter().enumerate().map(|(i, &l)| (i * 3 + 1, l as f64 * 0.25)).collect();
                let mut positives: Vec<usize> = candidates
                    .iter()
                    .zip(&flags)
                    .filter(|(_, &f)| f)
                    .map(|(c, _)| c.0)
                    .collect();
                if positives.is_empty() {
                    positives.push(candidates[0].0);
                }
                (candidates, positives, n)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(600))]

    #[test]
    fn matches_brute_force((candidates, positives, n) in candidate_case()) {
        let ranks = hit_ranks(&candidates, &positives);
        let got = rank_user(&ranks, positives.len(), n);
        let (hits, ndcg) = brute_force(&candidates, &positives, n);
        prop_assert_eq!(got.hits, hits);
        prop_assert_eq!(got.ndcg, ndcg);
        prop_assert!((0.0..=1.0).contains(&got.hr) && (0.0..=1.0).contains(&got.ndcg));
        if got.hits == 0 {
            prop_assert_eq!(got.ndcg, 0.0);
        }
    }

    #[test]
    fn rank_invariant_under_monotone_maps((candidates, positives, n) in candidate_case()) {
        let mapped: Vec<(usize, f64)> = candidates.iter().map(|&(i, s)| (i, (3.0 * s).exp() - 7.0)).collect();
        prop_assert_eq!(hit_ranks(&candidates, &positives), hit_ranks(&mapped, &positives));
        let a = rank_user(&hit_ranks(&candidates, &positives), positives.len(), n);
        let b = rank_user(&hit_ranks(&mapped, &positives), positives.len(), n);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn non_decreasing_in_cutoff((candidates, positives, _n) in candidate_case()) {
        let ranks = hit_ranks(&candidates, &positives);
        let t = positives.len();
        for n in 1..candidates.len() {
            let (a, b) = (rank_user(&ranks, t, n), rank_user(&ranks, t, n + 1));
            prop_assert!(a.hr <= b.hr);
            // the ideal gain keeps growing until n reaches |T|
            if n >= t {
                prop_assert!(a.ndcg <= b.ndcg + 1e-15);
            }
        }
    }
}
