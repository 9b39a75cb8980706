use std::collections::BTreeSet;

use diffnet_core::data::{
    bucket_users, read_split_manifest, save_dataset, split, synthesize, write_split_manifest, SplitSpec, SynthConfig,
};

fn small() -> SynthConfig {
    SynthConfig {
        num_users: 40,
        num_items: 60,
        positives_per_user: 6,
        avg_degree: 4.0,
        rng_seed: 5,
        ..SynthConfig::default()
    }
}

#[test]
fn saved_dataset_reloads_bit_exactly() {
    let ds = synthesize(&small()).unwrap().dataset;
    let dir = tempfile::tempdir().unwrap();
    let paths = save_dataset(&ds, dir.path()).unwrap();
    let back = paths.load().unwrap();
    assert_eq!(back, ds);
    let (a, b) = (ds.user_features().unwrap(), back.user_features().unwrap());
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    // saving the reloaded copy writes the same bytes
    let dir2 = tempfile::tempdir().unwrap();
    let paths2 = save_dataset(&back, dir2.path()).unwrap();
    assert_eq!(std::fs::read(&paths.ratings).unwrap(), std::fs::read(&paths2.ratings).unwrap());
    assert_eq!(
        std::fs::read(paths.item_features.unwrap()).unwrap(),
        std::fs::read(paths2.item_features.unwrap()).unwrap()
    );
}

#[test]
fn split_is_a_partition_and_survives_the_manifest() {
    let ds = synthesize(&small()).unwrap().dataset;
    let parts = split(&ds, &SplitSpec { rng_seed: 3, ..SplitSpec::default() }).unwrap();
    let mut seen = BTreeSet::new();
    for part in [&parts.train, &parts.validation, &parts.test] {
        for pair in part.pairs() {
            assert!(seen.insert(pair), "{pair:?} in two splits");
        }
    }
    assert_eq!(seen, ds.pairs().collect::<BTreeSet<_>>());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("split.tsv");
    write_split_manifest(&parts, &path).unwrap();
    let back = read_split_manifest(&ds, &path).unwrap();
    assert_eq!(back.train, parts.train);
    assert_eq!(back.validation, parts.validation);
    assert_eq!(back.test, parts.test);
}

#[test]
fn every_user_lands_in_one_bucket() {
    let ds = synthesize(&small()).unwrap().dataset;
    let buckets = bucket_users(&ds, &[3, 6, 9]).unwrap();
    assert_eq!(buckets.len(), ds.num_users());
    assert!(buckets.iter().all(|&b| b < 4));
}
