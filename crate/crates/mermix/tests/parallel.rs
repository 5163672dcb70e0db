use mermix::parallel;
use mermix::report::{cv_records, cv_table};
use mermix_core::{synth_generate, FusionConfig, SynthConfig, TrainConfig};

#[test]
fn parallel_cv_matches_sequential() {
    let ds = synth_generate(
        &SynthConfig {
            feature_dim: 8,
            per_class_per_session: 3,
            ..SynthConfig::default()
        },
        5,
    )
    .unwrap();
    let model = FusionConfig {
        feature_dim: 8,
        num_heads: 2,
        num_emotions: 4,
        dropout_rate: 0.1,
        ..FusionConfig::default()
    };
    let cfg = TrainConfig {
        epochs: 4,
        enable_aux1: true,
        enable_aux2: true,
        ..TrainConfig::synthetic()
    };
    let sequential = mermix_core::run_cv(&ds, &model, &cfg).unwrap();
    for threads in [1, 2, 5, 16] {
        let report = parallel::run_cv(&ds, &model, &cfg, threads).unwrap();
        assert_eq!(report, sequential, "{threads} threads");
        assert_eq!(cv_records(&report), cv_records(&sequential));
    }
    let table = cv_table(&sequential, &ds.class_names);
    assert_eq!(table.lines().filter(|l| l.starts_with("   ")).count(), 5);
    let tested: usize = sequential.folds.iter().map(|f| f.test_size).sum();
    assert_eq!(tested, ds.len());
}
