use std::collections::HashMap;

use mermix_core::auxiliary::recombine;
use mermix_core::{
    build_aux1, build_aux2, combined_label, split_combined_label, synth_generate, Batch, ClassPools, Dataset,
    ModalityKind, SynthConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dataset(per_class_per_session: usize, seed: u64) -> Dataset {
    synth_generate(
        &SynthConfig {
            num_emotions: 4,
            feature_dim: 4,
            min_frames: 1,
            max_frames: 4,
            per_class_per_session,
            ..SynthConfig::default()
        },
        seed,
    )
    .unwrap()
}

/// Row `i` of a padded modality, valid steps only, as raw bits.
fn row_bits(x: &mermix_core::Tensor, mask: &[bool], i: usize) -> Vec<u64> {
    let (t, c) = (x.shape()[1], x.shape()[2]);
    (0..t)
        .filter(|&s| mask[i * t + s])
        .flat_map(|s| x.data()[(i * t + s) * c..(i * t + s + 1) * c].iter().map(|v| v.to_bits()))
        .collect()
}

#[test]
fn combined_label_is_a_bijection() {
    for e in 1..=6 {
        let mut seen = vec![false; e * e];
        for a in 0..e {
            for t in 0..e {
                let k = combined_label(a, t, e).unwrap();
                assert_eq!(k, a * e + t);
                assert!(!seen[k]);
                seen[k] = true;
                assert_eq!(split_combined_label(k, e).unwrap(), (a, t));
            }
        }
        assert!(seen.iter().all(|&s| s));
        assert!(combined_label(e, 0, e).is_err());
        assert!(split_combined_label(e * e, e).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn aux1_preserves_feature_multisets(seed in any::<u64>(), size in 1usize..9) {
        let ds = dataset(2, seed % 7);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let indices: Vec<usize> = (0..size).map(|_| rng.random_range(0..ds.len())).collect();
        let batch = Batch::from_samples(&ds, &indices).unwrap();
        let aux = build_aux1(&batch, 4, &mut rng).unwrap();
        let b = &aux.batch;
        prop_assert_eq!(b.audio.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        batch.audio.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(&b.audio_mask, &batch.audio_mask);
        let mut before: Vec<Vec<u64>> = (0..size).map(|i| row_bits(&batch.text, &batch.text_mask, i)).collect();
        let mut after: Vec<Vec<u64>> = (0..size).map(|i| row_bits(&b.text, &b.text_mask, i)).collect();
        for (i, &p) in aux.permutation.iter().enumerate() {
            prop_assert_eq!(&after[i], &before[p]);
            prop_assert_eq!(aux.combined_labels[i], batch.labels[i] * 4 + batch.labels[p]);
        }
        before.sort();
        after.sort();
        prop_assert_eq!(before, after);
        let mut perm = aux.permutation.clone();
        perm.sort_unstable();
        prop_assert_eq!(perm, (0..size).collect::<Vec<_>>());
    }

    #[test]
    fn aux2_keeps_labels_and_replaces_one_modality(seed in any::<u64>(), size in 1usize..9) {
        let ds = dataset(1, seed % 5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let train: Vec<usize> = (0..ds.len()).filter(|i| i % 3 != 0).collect();
        let pools = ClassPools::build(&ds, &train);
        let indices: Vec<usize> = (0..size).map(|_| train[rng.random_range(0..train.len())]).collect();
        let batch = Batch::from_samples(&ds, &indices).unwrap();
        let aux = build_aux2(&batch, &ds, &pools, &mut rng).unwrap();
        prop_assert_eq!(&aux.batch.labels, &batch.labels);
        for (i, r) in aux.replacements.iter().enumerate() {
            let own = indices[i];
            prop_assert_eq!(ds.samples[r.donor].emotion, ds.samples[own].emotion);
            prop_assert!(pools.pool(batch.labels[i]).contains(&r.donor));
            if pools.pool(batch.labels[i]).len() > 1 {
                prop_assert_ne!(r.donor, own);
            }
            let audio = row_bits(&aux.batch.audio, &aux.batch.audio_mask, i);
            let text = row_bits(&aux.batch.text, &aux.batch.text_mask, i);
            let bits = |s: &mermix_core::FeatureSequence| s.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            let (from_a, from_t) = match r.modality {
                ModalityKind::Audio => (r.donor, own),
                ModalityKind::Text => (own, r.donor),
            };
            prop_assert_eq!(audio, bits(&ds.samples[from_a].audio));
            prop_assert_eq!(text, bits(&ds.samples[from_t].text));
        }
    }
}

#[test]
fn aux1_permutations_are_uniform() {
    let ds = dataset(1, 0);
    let batch = Batch::from_samples(&ds, &[0, 1, 2, 3]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let draws = 10_000;
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    for _ in 0..draws {
        *counts.entry(build_aux1(&batch, 4, &mut rng).unwrap().permutation).or_default() += 1;
    }
    assert_eq!(counts.len(), 24);
    for (perm, n) in counts {
        let f = n as f64 / draws as f64;
        assert!((f - 1.0 / 24.0).abs() <= 0.02, "{perm:?}: {f}");
    }
}

#[test]
fn recombine_rejects_non_permutations() {
    let ds = dataset(1, 0);
    let batch = Batch::from_samples(&ds, &[0, 1, 2]).unwrap();
    assert!(recombine(&batch, &[0, 0, 1], 4).is_err());
    assert!(recombine(&batch, &[0, 1], 4).is_err());
    assert!(recombine(&batch, &[2, 0, 1], 4).is_ok());
}

#[test]
fn aux2_modality_coin_and_donor_choice_are_fair() {
    let ds = dataset(2, 3);
    let all: Vec<usize> = (0..ds.len()).collect();
    let pools = ClassPools::build(&ds, &all);
    let receiver = 0;
    let pool = pools.pool(ds.samples[receiver].emotion).to_vec();
    let batch = Batch::from_samples(&ds, &[receiver]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let draws = 10_000;
    let mut audio = 0;
    let mut donors: HashMap<usize, usize> = HashMap::new();
    for _ in 0..draws {
        let aux = build_aux2(&batch, &ds, &pools, &mut rng).unwrap();
        let r = aux.replacements[0];
        assert_eq!(aux.batch.labels, batch.labels);
        if r.modality == ModalityKind::Audio {
            audio += 1;
        }
        *donors.entry(r.donor).or_default() += 1;
    }
    let f = audio as f64 / draws as f64;
    assert!((f - 0.5).abs() <= 0.03, "audio replaced {f}");
    assert!(!donors.contains_key(&receiver));
    assert_eq!(donors.len(), pool.len() - 1);
    let expected = 1.0 / (pool.len() - 1) as f64;
    for n in donors.values() {
        assert!((*n as f64 / draws as f64 - expected).abs() < 0.02);
    }
}

#[test]
fn singleton_pool_keeps_own_features() {
    let ds = dataset(1, 4);
    let pools = ClassPools::from_pools(vec![vec![0], vec![], vec![], vec![]]);
    assert_eq!(ds.samples[0].emotion, 0);
    let batch = Batch::from_samples(&ds, &[0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let aux = build_aux2(&batch, &ds, &pools, &mut rng).unwrap();
        assert_eq!(aux.replacements[0].donor, 0);
        assert_eq!(aux.batch.audio, batch.audio);
        assert_eq!(aux.batch.text, batch.text);
    }
    let other = Batch::from_samples(&ds, &[1]).unwrap();
    assert!(build_aux2(&other, &ds, &pools, &mut rng).is_err());
}
