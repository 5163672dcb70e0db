//! Multi-task training loop.
//!
//! Each step runs up to three forward passes that share one backward pass:
//!
//! ```text
//! L = l_main * CE(main(batch), y)
//!   + l_aux1 * CE(aux(recombined batch), label_a * E + label_t)
//!   + l_aux2 * CE(main(same-emotion replacement batch), y)
//! ```
//!
//! Disabled terms skip their forward pass. Randomness comes from separate
//! ChaCha streams (init, shuffle, auxiliary batches, dropout) derived from one
//! seed, so toggling an auxiliary task never shifts the shuffling order.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::auxiliary::{build_aux1, build_aux2};
use crate::batch::Batch;
use crate::data::{ClassPools, Dataset};
use crate::error::{Error, Result};
use crate::fusion::{argmax_rows, forward, predict, FusionConfig, FusionModelParams, Modality};
use crate::metrics::ConfusionMatrix;
use crate::optim::{adamw_step, AdamWConfig, OptimizerState, ParamUpdate};
use crate::tape::Tape;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lambda_main: f64,
    pub lambda_aux1: f64,
    pub lambda_aux2: f64,
    pub enable_aux1: bool,
    pub enable_aux2: bool,
    pub grad_clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 16,
            epochs: 20,
            lambda_main: 1.0,
            lambda_aux1: 1.0,
            lambda_aux2: 1.0,
            enable_aux1: false,
            enable_aux2: false,
            grad_clip_norm: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Defaults tuned for the small synthetic datasets (`lr = 1e-3`).
    pub fn synthetic() -> Self {
        Self {
            learning_rate: 1e-3,
            ..Self::default()
        }
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate {} must be > 0", self.learning_rate)));
        }
        if !(self.lambda_main > 0.0) {
            return Err(Error::Config(format!("lambda_main {} must be > 0", self.lambda_main)));
        }
        if !(self.lambda_aux1 >= 0.0 && self.lambda_aux2 >= 0.0) {
            return Err(Error::Config("auxiliary loss weights must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if let Some(c) = self.grad_clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("grad_clip_norm {c} must be > 0")));
            }
        }
        Ok(())
    }

    fn validate_with(&self, model: &FusionConfig) -> Result<()> {
        self.validate()?;
        model.validate()?;
        if model.modality != Modality::Both && (self.enable_aux1 || self.enable_aux2) {
            return Err(Error::Config("auxiliary tasks need both modalities".into()));
        }
        Ok(())
    }
}

const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_AUX: u64 = 2;
const STREAM_DROPOUT: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Independent random streams used during training.
#[derive(Debug, Clone)]
pub struct TrainRngs {
    pub shuffle: ChaCha8Rng,
    pub aux: ChaCha8Rng,
    pub dropout: ChaCha8Rng,
}

impl TrainRngs {
    pub fn new(seed: u64) -> Self {
        Self {
            shuffle: stream(seed, STREAM_SHUFFLE),
            aux: stream(seed, STREAM_AUX),
            dropout: stream(seed, STREAM_DROPOUT),
        }
    }
}

/// Initial parameters for `seed`.
pub fn init_params(model: &FusionConfig, seed: u64) -> Result<FusionModelParams> {
    FusionModelParams::init(model, &mut stream(seed, STREAM_INIT))
}

/// Per-step losses (unweighted) and main-task batch accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub main: f64,
    pub aux1: f64,
    pub aux2: f64,
    pub total: f64,
    pub correct: usize,
    pub count: usize,
}

impl StepLosses {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.count as f64
    }
}

/// Everything the model needs from the training split for one step.
pub struct TrainContext<'a> {
    pub dataset: &'a Dataset,
    pub pools: &'a ClassPools,
    pub model: &'a FusionConfig,
    pub train: &'a TrainConfig,
}

/// One optimization step: forward passes, one backward, one AdamW update.
pub fn train_step(
    params: &mut FusionModelParams,
    state: &mut OptimizerState,
    batch: &Batch,
    ctx: &TrainContext<'_>,
    rngs: &mut TrainRngs,
) -> Result<StepLosses> {
    let (model, cfg) = (ctx.model, ctx.train);
    let use_dropout = model.dropout_rate > 0.0;
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);

    fn dropout(r: &mut ChaCha8Rng, on: bool) -> Option<&mut dyn RngCore> {
        if on {
            Some(r)
        } else {
            None
        }
    }

    let out = forward(&mut tape, &bound, model, batch, dropout(&mut rngs.dropout, use_dropout))?;
    let predictions = argmax_rows(tape.value(out.main_logits));
    let correct = predictions.iter().zip(&batch.labels).filter(|(p, y)| p == y).count();
    let l_main = tape.cross_entropy(out.main_logits, &batch.labels)?;
    let mut total = tape.scale(l_main, cfg.lambda_main);
    let mut losses = StepLosses {
        main: tape.value(l_main).item(),
        aux1: 0.0,
        aux2: 0.0,
        total: 0.0,
        correct,
        count: batch.len(),
    };

    if cfg.enable_aux1 {
        let aux = build_aux1(batch, model.num_emotions, &mut rngs.aux)?;
        let out = forward(&mut tape, &bound, model, &aux.batch, dropout(&mut rngs.dropout, use_dropout))?;
        let l = tape.cross_entropy(out.aux_logits, &aux.combined_labels)?;
        losses.aux1 = tape.value(l).item();
        let weighted = tape.scale(l, cfg.lambda_aux1);
        total = tape.add(total, weighted)?;
    }
    if cfg.enable_aux2 {
        let aux = build_aux2(batch, ctx.dataset, ctx.pools, &mut rngs.aux)?;
        let out = forward(&mut tape, &bound, model, &aux.batch, dropout(&mut rngs.dropout, use_dropout))?;
        let l = tape.cross_entropy(out.main_logits, &aux.batch.labels)?;
        losses.aux2 = tape.value(l).item();
        let weighted = tape.scale(l, cfg.lambda_aux2);
        total = tape.add(total, weighted)?;
    }
    losses.total = tape.value(total).item();
    tape.backward(total)?;

    let mut grads: Vec<Vec<f64>> = bound
        .entries()
        .iter()
        .map(|(_, v)| tape.grad(**v).expect("leaf gradient").to_vec())
        .collect();
    if let Some(max_norm) = cfg.grad_clip_norm {
        let norm = libm::sqrt(grads.iter().flatten().map(|g| g * g).sum::<f64>());
        if norm > max_norm {
            let f = max_norm / norm;
            grads.iter_mut().flatten().for_each(|g| *g *= f);
        }
    }
    let mut entries = params.entries_mut();
    let mut updates: Vec<ParamUpdate<'_>> = entries
        .iter_mut()
        .zip(&grads)
        .map(|((name, t), g)| ParamUpdate::new(name, t.data_mut(), g))
        .collect();
    adamw_step(&mut updates, state, &cfg.adamw())?;
    Ok(losses)
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub losses: StepLosses,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub main: f64,
    pub aux1: f64,
    pub aux2: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: FusionModelParams,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

/// Trains a freshly initialized model on `indices` of `dataset`.
pub fn train(dataset: &Dataset, indices: &[usize], model: &FusionConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate_with(model)?;
    if indices.is_empty() {
        return Err(Error::Config("empty training split".into()));
    }
    if dataset.feature_dim() != Some(model.feature_dim) {
        return Err(Error::Config(format!(
            "dataset feature dim {:?} differs from model feature_dim {}",
            dataset.feature_dim(),
            model.feature_dim
        )));
    }
    if dataset.num_emotions != model.num_emotions {
        return Err(Error::Config(format!(
            "dataset has {} classes, model expects {}",
            dataset.num_emotions, model.num_emotions
        )));
    }
    let mut params = init_params(model, cfg.seed)?;
    let mut state = OptimizerState::new();
    let mut rngs = TrainRngs::new(cfg.seed);
    let pools = ClassPools::build(dataset, indices);
    let ctx = TrainContext {
        dataset,
        pools: &pools,
        model,
        train: cfg,
    };
    let mut order = indices.to_vec();
    let mut steps = Vec::new();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rngs.shuffle);
        let (mut main, mut aux1, mut aux2, mut correct, mut batches) = (0.0, 0.0, 0.0, 0, 0);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = Batch::from_samples(dataset, chunk)?;
            let losses = train_step(&mut params, &mut state, &batch, &ctx, &mut rngs)?;
            main += losses.main;
            aux1 += losses.aux1;
            aux2 += losses.aux2;
            correct += losses.correct;
            batches += 1;
            steps.push(StepRecord { epoch, step, losses });
            step += 1;
        }
        let n = batches as f64;
        epochs.push(EpochRecord {
            epoch,
            main: main / n,
            aux1: aux1 / n,
            aux2: aux2 / n,
            train_accuracy: correct as f64 / order.len() as f64,
        });
    }
    Ok(TrainOutcome { params, steps, epochs })
}

/// Predicted emotions for `indices`, in order.
pub fn predict_indices(
    params: &FusionModelParams,
    model: &FusionConfig,
    dataset: &Dataset,
    indices: &[usize],
    batch_size: usize,
) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(batch_size.max(1)) {
        let batch = Batch::from_samples(dataset, chunk)?;
        out.extend(predict(params, model, &batch)?);
    }
    Ok(out)
}

pub fn evaluate(
    params: &FusionModelParams,
    model: &FusionConfig,
    dataset: &Dataset,
    indices: &[usize],
    batch_size: usize,
) -> Result<ConfusionMatrix> {
    let predictions = predict_indices(params, model, dataset, indices, batch_size)?;
    let truth: Vec<usize> = indices.iter().map(|&i| dataset.samples[i].emotion).collect();
    ConfusionMatrix::from_predictions(dataset.num_emotions, &truth, &predictions)
}
