//! Padded mini-batches with per-step validity masks.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Dataset, FeatureSequence};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A padded batch: `audio` is `(B, T_a, C)`, `text` is `(B, T_t, C)`.
///
/// Masks are row-major `B x T` flags; `true` marks a valid step.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub audio: Tensor,
    pub audio_mask: Vec<bool>,
    pub text: Tensor,
    pub text_mask: Vec<bool>,
    pub labels: Vec<usize>,
    /// Dataset index of each row, used to exclude self-donation.
    pub sample_ids: Vec<usize>,
}

impl Batch {
    /// Pads `(audio, text)` pairs to the longest sequence per modality.
    pub fn collate(
        pairs: &[(&FeatureSequence, &FeatureSequence)],
        labels: Vec<usize>,
        sample_ids: Vec<usize>,
    ) -> Result<Self> {
        if pairs.is_empty() || labels.len() != pairs.len() || sample_ids.len() != pairs.len() {
            return Err(Error::Dataset(format!(
                "cannot collate {} pairs with {} labels and {} ids",
                pairs.len(),
                labels.len(),
                sample_ids.len()
            )));
        }
        let dim = pairs[0].0.dim();
        if pairs.iter().any(|(a, t)| a.dim() != dim || t.dim() != dim) {
            return Err(Error::Dataset("feature dims differ within batch".into()));
        }
        let (audio, audio_mask) = pad(pairs.iter().map(|p| p.0), dim)?;
        let (text, text_mask) = pad(pairs.iter().map(|p| p.1), dim)?;
        Ok(Self {
            audio,
            audio_mask,
            text,
            text_mask,
            labels,
            sample_ids,
        })
    }

    pub fn from_samples(dataset: &Dataset, indices: &[usize]) -> Result<Self> {
        let pairs: Vec<_> = indices
            .iter()
            .map(|&i| (&dataset.samples[i].audio, &dataset.samples[i].text))
            .collect();
        let labels = indices.iter().map(|&i| dataset.samples[i].emotion).collect();
        Self::collate(&pairs, labels, indices.to_vec())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.audio.shape()[2]
    }

    pub fn audio_steps(&self) -> usize {
        self.audio.shape()[1]
    }

    pub fn text_steps(&self) -> usize {
        self.text.shape()[1]
    }

    /// Checks shapes and that every sample has a valid step in both modalities.
    pub fn validate(&self) -> Result<()> {
        let b = self.len();
        for (name, t, mask) in [
            ("audio", &self.audio, &self.audio_mask),
            ("text", &self.text, &self.text_mask),
        ] {
            let s = t.shape();
            if s.len() != 3 || s[0] != b || mask.len() != s[0] * s[1] {
                return Err(Error::Dataset(format!(
                    "{name} tensor {s:?} / mask {} inconsistent with batch size {b}",
                    mask.len()
                )));
            }
            for (i, row) in mask.chunks(s[1]).enumerate() {
                if !row.iter().any(|&m| m) {
                    return Err(Error::Dataset(format!("sample {i} has no valid {name} step")));
                }
            }
        }
        if self.audio.shape()[2] != self.text.shape()[2] {
            return Err(Error::Dataset("audio and text feature dims differ".into()));
        }
        if self.sample_ids.len() != b {
            return Err(Error::Dataset("sample id count differs from batch size".into()));
        }
        Ok(())
    }
}

fn pad<'a>(
    seqs: impl Iterator<Item = &'a FeatureSequence> + Clone,
    dim: usize,
) -> Result<(Tensor, Vec<bool>)> {
    let b = seqs.clone().count();
    let t_max = seqs.clone().map(|s| s.frames()).max().unwrap_or(1);
    let mut data = vec![0.0; b * t_max * dim];
    let mut mask = vec![false; b * t_max];
    for (i, s) in seqs.enumerate() {
        let base = i * t_max * dim;
        data[base..base + s.frames() * dim].copy_from_slice(s.values());
        mask[i * t_max..i * t_max + s.frames()].fill(true);
    }
    Ok((Tensor::new(vec![b, t_max, dim], data)?, mask))
}
