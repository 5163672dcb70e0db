use std::collections::HashSet;

use mermix_core::{fold_seed, holdout_split, split_by_session, synth_generate, Dataset, SynthConfig};
use proptest::prelude::*;

fn dataset(per_class_per_session: usize, seed: u64) -> Dataset {
    synth_generate(
        &SynthConfig {
            feature_dim: 4,
            min_frames: 1,
            max_frames: 2,
            per_class_per_session,
            ..SynthConfig::default()
        },
        seed,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn session_folds_partition_the_corpus(per in 1usize..5, seed in any::<u64>()) {
        let ds = dataset(per, seed);
        let folds = split_by_session(&ds).unwrap();
        prop_assert_eq!(folds.len(), 5);
        let mut tested = vec![0; ds.len()];
        for f in &folds {
            let train: HashSet<&str> = f.train.iter().map(|&i| ds.samples[i].utterance_id.as_str()).collect();
            let test: HashSet<&str> = f.test.iter().map(|&i| ds.samples[i].utterance_id.as_str()).collect();
            prop_assert!(train.is_disjoint(&test));
            prop_assert_eq!(train.len() + test.len(), ds.len());
            for &i in &f.test {
                prop_assert_eq!(ds.samples[i].session, f.id);
                tested[i] += 1;
            }
        }
        prop_assert!(tested.iter().all(|&n| n == 1));
    }

    #[test]
    fn holdout_is_stratified_and_disjoint(per in 2usize..6, take in 1usize..5, seed in any::<u64>()) {
        let ds = dataset(per, 0);
        prop_assume!(take < 5 * per);
        let f = holdout_split(&ds, take, seed).unwrap();
        prop_assert_eq!(f.test.len(), take * 4);
        prop_assert_eq!(f.train.len() + f.test.len(), ds.len());
        let train: HashSet<usize> = f.train.iter().copied().collect();
        prop_assert!(f.test.iter().all(|i| !train.contains(i)));
        for class in 0..4 {
            prop_assert_eq!(f.test.iter().filter(|&&i| ds.samples[i].emotion == class).count(), take);
        }
    }
}

#[test]
fn missing_session_is_an_error() {
    let mut ds = dataset(1, 0);
    ds.samples.retain(|s| s.session != 3);
    assert!(split_by_session(&ds).is_err());
}

#[test]
fn fold_seeds_are_distinct_and_stable() {
    let seeds: HashSet<u64> = (1..=5).map(|k| fold_seed(7, k)).collect();
    assert_eq!(seeds.len(), 5);
    assert_eq!(fold_seed(7, 2), fold_seed(7, 2));
    assert_ne!(fold_seed(7, 2), fold_seed(8, 2));
}
