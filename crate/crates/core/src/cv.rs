//! Leave-one-session-out cross-validation.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, NUM_SESSIONS};
use crate::error::{Error, Result};
use crate::fusion::FusionConfig;
use crate::metrics::{unweighted_accuracy, weighted_accuracy, ConfusionMatrix};
use crate::train::{evaluate, train, TrainConfig};

/// Train/test index sets of one fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    /// 1-based fold number; also the held-out session.
    pub id: u8,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Fold `k` tests on session `k` and trains on the other four.
pub fn split_by_session(dataset: &Dataset) -> Result<Vec<Fold>> {
    let mut folds = Vec::with_capacity(NUM_SESSIONS as usize);
    for session in 1..=NUM_SESSIONS {
        let test = dataset.session_indices(session);
        if test.is_empty() {
            return Err(Error::Config(format!("session {session} has no utterances")));
        }
        let train = (0..dataset.len())
            .filter(|&i| dataset.samples[i].session != session)
            .collect();
        folds.push(Fold { id: session, train, test });
    }
    Ok(folds)
}

/// Stratified random split holding out `test_per_class` samples of every class.
pub fn holdout_split(dataset: &Dataset, test_per_class: usize, seed: u64) -> Result<Fold> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..dataset.num_emotions {
        let mut members: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.samples[i].emotion == class)
            .collect();
        if members.len() <= test_per_class {
            return Err(Error::Dataset(format!(
                "class {class} has {} samples, cannot hold out {test_per_class}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        test.extend_from_slice(&members[..test_per_class]);
        train.extend_from_slice(&members[test_per_class..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Fold { id: 0, train, test })
}

/// Seed of fold `fold` derived from the run's master seed.
pub fn fold_seed(master: u64, fold: u8) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(0x464f_4c44_0000 + u64::from(fold));
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub fold: u8,
    pub train_size: usize,
    pub test_size: usize,
    pub confusion: ConfusionMatrix,
    pub wa: f64,
    pub ua: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<FoldReport>,
    pub mean_wa: f64,
    pub mean_ua: f64,
}

impl CvReport {
    /// Averages fold results in fold order.
    pub fn from_folds(mut folds: Vec<FoldReport>) -> Result<Self> {
        if folds.is_empty() {
            return Err(Error::Config("no folds to report".into()));
        }
        folds.sort_by_key(|f| f.fold);
        let n = folds.len() as f64;
        let mean_wa = folds.iter().map(|f| f.wa).sum::<f64>() / n;
        let mean_ua = folds.iter().map(|f| f.ua).sum::<f64>() / n;
        Ok(Self { folds, mean_wa, mean_ua })
    }
}

/// Trains on `fold.train` from a fresh initialization and scores `fold.test`.
pub fn run_fold(dataset: &Dataset, fold: &Fold, model: &FusionConfig, cfg: &TrainConfig) -> Result<FoldReport> {
    if fold.train.iter().any(|i| fold.test.contains(i)) {
        return Err(Error::Config(format!("fold {} trains on a test utterance", fold.id)));
    }
    let outcome = train(dataset, &fold.train, model, cfg)?;
    let confusion = evaluate(&outcome.params, model, dataset, &fold.test, cfg.batch_size)?;
    Ok(FoldReport {
        fold: fold.id,
        train_size: fold.train.len(),
        test_size: fold.test.len(),
        wa: weighted_accuracy(&confusion)?,
        ua: unweighted_accuracy(&confusion)?,
        confusion,
    })
}

/// The training configuration used for fold `fold` of a run seeded with `cfg.seed`.
pub fn fold_config(cfg: &TrainConfig, fold: u8) -> TrainConfig {
    TrainConfig {
        seed: fold_seed(cfg.seed, fold),
        ..cfg.clone()
    }
}

/// Runs all five folds one after another.
pub fn run_cv(dataset: &Dataset, model: &FusionConfig, cfg: &TrainConfig) -> Result<CvReport> {
    let folds = split_by_session(dataset)?;
    let reports = folds
        .iter()
        .map(|f| run_fold(dataset, f, model, &fold_config(cfg, f.id)))
        .collect::<Result<Vec<_>>>()?;
    CvReport::from_folds(reports)
}
