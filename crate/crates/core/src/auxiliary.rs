//! Auxiliary training batches.
//!
//! * Recombination: text rows of a batch are shuffled against the audio rows
//!   and the model predicts the ordered pair `(audio class, text class)`,
//!   encoded as `label_a * E + label_t`.
//! * Same-emotion replacement: one modality per sample, chosen by a fair
//!   coin, is swapped for the features of another utterance of the same
//!   emotion; the emotion label is kept.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::batch::Batch;
use crate::data::{ClassPools, Dataset, ModalityKind};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Encodes an ordered class pair as `label_a * num_emotions + label_t`.
pub fn combined_label(label_a: usize, label_t: usize, num_emotions: usize) -> Result<usize> {
    for label in [label_a, label_t] {
        if label >= num_emotions {
            return Err(Error::Label {
                label,
                classes: num_emotions,
            });
        }
    }
    Ok(label_a * num_emotions + label_t)
}

/// Inverse of [`combined_label`].
pub fn split_combined_label(label: usize, num_emotions: usize) -> Result<(usize, usize)> {
    if label >= num_emotions * num_emotions {
        return Err(Error::Label {
            label,
            classes: num_emotions * num_emotions,
        });
    }
    Ok((label / num_emotions, label % num_emotions))
}

/// A batch whose text rows were permuted against its audio rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Aux1Batch {
    /// `labels` holds the combined labels.
    pub batch: Batch,
    /// Row `i` pairs audio `i` with text `permutation[i]`.
    pub permutation: Vec<usize>,
    pub combined_labels: Vec<usize>,
}

/// Builds the recombined batch from a uniformly random permutation.
/// Fixed points are allowed; they yield matched (diagonal) labels.
pub fn build_aux1<R: Rng + ?Sized>(batch: &Batch, num_emotions: usize, rng: &mut R) -> Result<Aux1Batch> {
    let mut permutation: Vec<usize> = (0..batch.len()).collect();
    permutation.shuffle(rng);
    recombine(batch, &permutation, num_emotions)
}

/// Pairs audio row `i` with text row `permutation[i]`.
pub fn recombine(batch: &Batch, permutation: &[usize], num_emotions: usize) -> Result<Aux1Batch> {
    let b = batch.len();
    if permutation.len() != b {
        return Err(Error::Config(format!(
            "permutation of length {} for batch of {b}",
            permutation.len()
        )));
    }
    let mut seen = alloc::vec![false; b];
    for &p in permutation {
        if p >= b || core::mem::replace(&mut seen[p], true) {
            return Err(Error::Config(format!("{permutation:?} is not a permutation")));
        }
    }
    let shape = batch.text.shape().to_vec();
    let row = shape[1] * shape[2];
    let steps = shape[1];
    let src = batch.text.data();
    let mut data = Vec::with_capacity(src.len());
    let mut mask = Vec::with_capacity(batch.text_mask.len());
    for &p in permutation {
        data.extend_from_slice(&src[p * row..(p + 1) * row]);
        mask.extend_from_slice(&batch.text_mask[p * steps..(p + 1) * steps]);
    }
    let combined_labels = (0..b)
        .map(|i| combined_label(batch.labels[i], batch.labels[permutation[i]], num_emotions))
        .collect::<Result<Vec<_>>>()?;
    Ok(Aux1Batch {
        batch: Batch {
            audio: batch.audio.clone(),
            audio_mask: batch.audio_mask.clone(),
            text: Tensor::new(shape, data)?,
            text_mask: mask,
            labels: combined_labels.clone(),
            sample_ids: batch.sample_ids.clone(),
        },
        permutation: permutation.to_vec(),
        combined_labels,
    })
}

/// Which modality of a sample was replaced and by whom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Replacement {
    pub modality: ModalityKind,
    /// Dataset index of the donor; equals the sample itself when its class
    /// pool has no other member.
    pub donor: usize,
}

/// A batch where every sample has one modality taken from a same-class donor.
#[derive(Debug, Clone, PartialEq)]
pub struct Aux2Batch {
    pub batch: Batch,
    pub replacements: Vec<Replacement>,
}

/// Builds the same-emotion replacement batch.
///
/// For each sample a fair coin picks the modality to replace, and the donor
/// is drawn uniformly from the sample's class pool excluding itself.
pub fn build_aux2<R: Rng + ?Sized>(
    batch: &Batch,
    dataset: &Dataset,
    pools: &ClassPools,
    rng: &mut R,
) -> Result<Aux2Batch> {
    let mut replacements = Vec::with_capacity(batch.len());
    for (&id, &label) in batch.sample_ids.iter().zip(&batch.labels) {
        let pool = pools.pool(label);
        if pool.is_empty() {
            return Err(Error::Dataset(format!("empty donor pool for class {label}")));
        }
        let modality = if rng.random::<bool>() {
            ModalityKind::Audio
        } else {
            ModalityKind::Text
        };
        let self_pos = pool.iter().position(|&d| d == id);
        let candidates = pool.len() - usize::from(self_pos.is_some());
        let donor = if candidates == 0 {
            id
        } else {
            let mut j = rng.random_range(0..candidates);
            if let Some(s) = self_pos {
                if j >= s {
                    j += 1;
                }
            }
            pool[j]
        };
        if dataset.samples[donor].emotion != label {
            return Err(Error::Dataset(format!(
                "donor {donor} has class {} but receiver has class {label}",
                dataset.samples[donor].emotion
            )));
        }
        replacements.push(Replacement { modality, donor });
    }
    let pairs: Vec<_> = batch
        .sample_ids
        .iter()
        .zip(&replacements)
        .map(|(&id, r)| {
            let own = &dataset.samples[id];
            let donor = &dataset.samples[r.donor];
            match r.modality {
                ModalityKind::Audio => (&donor.audio, &own.text),
                ModalityKind::Text => (&own.audio, &donor.text),
            }
        })
        .collect();
    let batch = Batch::collate(&pairs, batch.labels.clone(), batch.sample_ids.clone())?;
    Ok(Aux2Batch { batch, replacements })
}
