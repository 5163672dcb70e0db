//! Central finite-difference check of every fusion-model parameter.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::auxiliary::recombine;
use crate::batch::Batch;
use crate::data::FeatureSequence;
use crate::error::Result;
use crate::fusion::{forward, FusionConfig, FusionModelParams};
use crate::tape::{Fault, Tape};

/// Relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Denominator floor of [`relative_error`]. The roundoff of a central
    /// difference is about `eps * |loss| / step`, near 1e-10 here, so
    /// gradients that are exactly zero still score well under tolerance.
    pub floor: f64,
    pub batch_size: usize,
    pub max_frames: usize,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-5,
            batch_size: 3,
            max_frames: 4,
            seed: 0,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupError {
    pub name: String,
    pub scalars: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub groups: Vec<GroupError>,
    pub max_relative_error: f64,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }
}

/// Random batch with features in `[-1, 1]` and lengths in `1..=max_frames`.
pub fn random_batch<R: Rng + ?Sized>(rng: &mut R, cfg: &FusionConfig, size: usize, max_frames: usize) -> Result<Batch> {
    let c = cfg.feature_dim;
    let seq = |rng: &mut R| {
        let t = rng.random_range(1..=max_frames);
        FeatureSequence::new(t, c, (0..t * c).map(|_| rng.random_range(-1.0..1.0)).collect())
    };
    let mut seqs = Vec::with_capacity(size);
    for _ in 0..size {
        seqs.push((seq(rng)?, seq(rng)?));
    }
    let pairs: Vec<_> = seqs.iter().map(|(a, t)| (a, t)).collect();
    let labels = (0..size).map(|_| rng.random_range(0..cfg.num_emotions)).collect();
    Batch::collate(&pairs, labels, (0..size).collect())
}

/// Glorot weights with biases drawn from `[-1, 1]` instead of zero.
pub fn random_params<R: RngCore>(rng: &mut R, cfg: &FusionConfig) -> Result<FusionModelParams> {
    let mut p = FusionModelParams::init(cfg, rng)?;
    for (_, t) in p.entries_mut() {
        if t.ndim() == 1 {
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
    }
    Ok(p)
}

/// Main-task loss on `batch` plus recombination loss on a rotated copy, so
/// that both heads carry gradient.
fn loss_graph(
    tape: &mut Tape,
    params: &FusionModelParams,
    cfg: &FusionConfig,
    batch: &Batch,
    recombined: &Batch,
) -> Result<(crate::fusion::FusionParams<crate::tape::Var>, crate::tape::Var)> {
    let bound = params.bind(tape);
    let main = forward(tape, &bound, cfg, batch, None)?;
    let l_main = tape.cross_entropy(main.main_logits, &batch.labels)?;
    let aux = forward(tape, &bound, cfg, recombined, None)?;
    let l_aux = tape.cross_entropy(aux.aux_logits, &recombined.labels)?;
    let loss = tape.add(l_main, l_aux)?;
    Ok((bound, loss))
}

/// Compares backward gradients with central differences for every scalar.
pub fn check_fusion_gradients(cfg: &FusionConfig, opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let params = random_params(&mut rng, cfg)?;
    let batch = random_batch(&mut rng, cfg, opts.batch_size, opts.max_frames)?;
    let rotation: Vec<usize> = (0..batch.len()).map(|i| (i + 1) % batch.len()).collect();
    let recombined = recombine(&batch, &rotation, cfg.num_emotions)?.batch;

    let mut tape = Tape::new();
    tape.inject_fault(opts.fault);
    let (bound, loss) = loss_graph(&mut tape, &params, cfg, &batch, &recombined)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = bound
        .entries()
        .iter()
        .map(|(_, v)| tape.grad(**v).expect("leaf gradient").to_vec())
        .collect();

    let eval = |p: &FusionModelParams| -> Result<f64> {
        let mut tape = Tape::new();
        let (_, loss) = loss_graph(&mut tape, p, cfg, &batch, &recombined)?;
        Ok(tape.value(loss).item())
    };

    let mut probe = params.clone();
    let names: Vec<String> = params.entries().into_iter().map(|(n, _)| n).collect();
    let mut groups = Vec::with_capacity(names.len());
    let mut worst: f64 = 0.0;
    for (g, name) in names.iter().enumerate() {
        let len = analytic[g].len();
        let mut group_worst: f64 = 0.0;
        for i in 0..len {
            let original = params.entries()[g].1.data()[i];
            set(&mut probe, g, i, original + opts.step);
            let plus = eval(&probe)?;
            set(&mut probe, g, i, original - opts.step);
            let minus = eval(&probe)?;
            set(&mut probe, g, i, original);
            let numeric = (plus - minus) / (2.0 * opts.step);
            let e = relative_error(analytic[g][i], numeric, opts.floor);
            group_worst = group_worst.max(e);
        }
        worst = worst.max(group_worst);
        groups.push(GroupError {
            name: name.clone(),
            scalars: len,
            max_relative_error: group_worst,
        });
    }
    Ok(GradcheckReport {
        groups,
        max_relative_error: worst,
        tolerance: opts.tolerance,
    })
}

fn set(params: &mut FusionModelParams, group: usize, index: usize, value: f64) {
    params.entries_mut()[group].1.data_mut()[index] = value;
}
