//! Utterance-level feature data: sequences, paired samples, datasets.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Four-class label map; "excited" is folded into "happy".
pub const EMOTIONS: [&str; 4] = ["angry", "happy", "sad", "neutral"];

/// Number of recording sessions, one held out per cross-validation fold.
pub const NUM_SESSIONS: u8 = 5;

/// Maps a raw corpus label onto the four-class scheme.
pub fn emotion_index(raw: &str) -> Option<usize> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "angry" | "ang" => Some(0),
        "happy" | "hap" | "excited" | "exc" => Some(1),
        "sad" => Some(2),
        "neutral" | "neu" => Some(3),
        _ => None,
    }
}

/// Class names for `num_emotions` classes: the emotion map when it has four
/// classes, `class{c}` otherwise.
pub fn default_class_names(num_emotions: usize) -> Vec<String> {
    if num_emotions == EMOTIONS.len() {
        EMOTIONS.iter().map(|s| s.to_string()).collect()
    } else {
        (0..num_emotions).map(|c| format!("class{c}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModalityKind {
    Audio = 0,
    Text = 1,
}

/// One utterance's embedding matrix for one modality, `frames x dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    frames: usize,
    dim: usize,
    values: Vec<f64>,
}

impl FeatureSequence {
    pub fn new(frames: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if frames == 0 || dim == 0 || values.len() != frames * dim {
            return Err(Error::Dataset(format!(
                "feature sequence {frames}x{dim} cannot hold {} values",
                values.len()
            )));
        }
        Ok(Self { frames, dim, values })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    /// Mean over frames.
    pub fn mean_frame(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for row in self.values.chunks(self.dim) {
            out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
        }
        let inv = 1.0 / self.frames as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        out
    }
}

/// Paired audio and text features of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub utterance_id: String,
    pub session: u8,
    pub emotion: usize,
    pub audio: FeatureSequence,
    pub text: FeatureSequence,
}

impl Sample {
    pub fn modality(&self, kind: ModalityKind) -> &FeatureSequence {
        match kind {
            ModalityKind::Audio => &self.audio,
            ModalityKind::Text => &self.text,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub num_emotions: usize,
    pub class_names: Vec<String>,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetMeta {
    pub num_emotions: usize,
    pub class_names: Vec<String>,
    pub sessions: Vec<u8>,
    pub class_counts: Vec<usize>,
}

impl Dataset {
    pub fn new(num_emotions: usize, samples: Vec<Sample>) -> Result<Self> {
        let ds = Self {
            num_emotions,
            class_names: default_class_names(num_emotions),
            samples,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Feature dimension shared by every sequence, if any sample exists.
    pub fn feature_dim(&self) -> Option<usize> {
        self.samples.first().map(|s| s.audio.dim())
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_emotions < 2 {
            return Err(Error::Config(format!(
                "need at least 2 emotion classes, got {}",
                self.num_emotions
            )));
        }
        if self.class_names.len() != self.num_emotions {
            return Err(Error::Dataset("class name count differs from emotion count".into()));
        }
        let dim = self.feature_dim();
        let mut ids = BTreeSet::new();
        for (i, s) in self.samples.iter().enumerate() {
            if s.emotion >= self.num_emotions {
                return Err(Error::Label {
                    label: s.emotion,
                    classes: self.num_emotions,
                });
            }
            if !(1..=NUM_SESSIONS).contains(&s.session) {
                return Err(Error::Dataset(format!(
                    "sample {i} ({}) has session {} outside 1..={NUM_SESSIONS}",
                    s.utterance_id, s.session
                )));
            }
            if Some(s.audio.dim()) != dim || Some(s.text.dim()) != dim {
                return Err(Error::Dataset(format!(
                    "sample {i} ({}) has feature dims {}/{}, expected {:?}",
                    s.utterance_id,
                    s.audio.dim(),
                    s.text.dim(),
                    dim
                )));
            }
            if !ids.insert(s.utterance_id.as_str()) {
                return Err(Error::Dataset(format!("duplicate utterance id {}", s.utterance_id)));
            }
        }
        Ok(())
    }

    pub fn meta(&self) -> DatasetMeta {
        let mut class_counts = vec![0; self.num_emotions];
        let mut sessions = BTreeSet::new();
        for s in &self.samples {
            class_counts[s.emotion] += 1;
            sessions.insert(s.session);
        }
        DatasetMeta {
            num_emotions: self.num_emotions,
            class_names: self.class_names.clone(),
            sessions: sessions.into_iter().collect(),
            class_counts,
        }
    }

    /// Indices of samples recorded in `session`.
    pub fn session_indices(&self, session: u8) -> Vec<usize> {
        (0..self.samples.len())
            .filter(|&i| self.samples[i].session == session)
            .collect()
    }
}

/// Same-class donor pools over a set of sample indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPools {
    pools: Vec<Vec<usize>>,
}

impl ClassPools {
    pub fn build(dataset: &Dataset, indices: &[usize]) -> Self {
        let mut pools = vec![Vec::new(); dataset.num_emotions];
        for &i in indices {
            pools[dataset.samples[i].emotion].push(i);
        }
        Self { pools }
    }

    pub fn from_pools(pools: Vec<Vec<usize>>) -> Self {
        Self { pools }
    }

    pub fn pool(&self, class: usize) -> &[usize] {
        self.pools.get(class).map_or(&[], |p| p.as_slice())
    }

    pub fn num_classes(&self) -> usize {
        self.pools.len()
    }
}
