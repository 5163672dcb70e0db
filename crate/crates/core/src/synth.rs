//! Synthetic paired audio/text embeddings with controllable per-modality
//! informativeness.
//!
//! In additive mode, class `c` draws audio frames from
//! `N(s_a * mu_c^a, sigma^2 I)` and text frames from `N(s_t * mu_c^t, sigma^2 I)`.
//! In xor mode (two classes), each utterance has latent bits `(a, b)`; audio
//! frames carry only `a`, text frames only `b`, and the label is `a xor b`, so
//! neither modality alone beats chance.
//!
//! Class means are orthonormal, drawn from a seeded Gaussian and
//! Gram-Schmidt orthonormalized. Values are rounded to `f32` so that a
//! generated dataset survives a round trip through the feature file format.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, FeatureSequence, Sample, NUM_SESSIONS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthMode {
    Additive,
    Xor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_emotions: usize,
    pub feature_dim: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Audio informativeness `s_a` in `[0, 1]`.
    pub audio_signal: f64,
    /// Text informativeness `s_t` in `[0, 1]`.
    pub text_signal: f64,
    pub noise: f64,
    pub per_class_per_session: usize,
    pub mode: SynthMode,
    /// Probability that a frame carries the class mean; other frames are
    /// pure noise.
    pub signal_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_emotions: 4,
            feature_dim: 16,
            min_frames: 3,
            max_frames: 8,
            audio_signal: 1.0,
            text_signal: 1.0,
            noise: 0.5,
            per_class_per_session: 10,
            mode: SynthMode::Additive,
            signal_fraction: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::Config(m));
        for (name, s) in [("audio_signal", self.audio_signal), ("text_signal", self.text_signal)] {
            if !(0.0..=1.0).contains(&s) {
                return bad(format!("{name} {s} outside [0, 1]"));
            }
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return bad(format!("noise {} must be positive", self.noise));
        }
        if !(self.signal_fraction > 0.0 && self.signal_fraction <= 1.0) {
            return bad(format!("signal_fraction {} outside (0, 1]", self.signal_fraction));
        }
        if self.min_frames == 0 || self.min_frames > self.max_frames {
            return bad(format!(
                "frame range [{}, {}] is empty or starts at 0",
                self.min_frames, self.max_frames
            ));
        }
        if self.num_emotions < 2 {
            return bad(format!("num_emotions {} must be at least 2", self.num_emotions));
        }
        if self.mode == SynthMode::Xor && self.num_emotions != 2 {
            return bad(format!("xor mode has 2 classes, got {}", self.num_emotions));
        }
        let means = self.means_per_modality();
        if means > self.feature_dim {
            return bad(format!(
                "{means} orthonormal class means do not fit in {} dimensions",
                self.feature_dim
            ));
        }
        Ok(())
    }

    fn means_per_modality(&self) -> usize {
        match self.mode {
            SynthMode::Additive => self.num_emotions,
            SynthMode::Xor => 2,
        }
    }
}

/// Holds the class means for one seed and generates the dataset.
#[derive(Debug, Clone)]
pub struct SynthGenerator {
    cfg: SynthConfig,
    seed: u64,
    audio_means: Vec<Vec<f64>>,
    text_means: Vec<Vec<f64>>,
}

const STREAM_AUDIO_MEANS: u64 = 0;
const STREAM_TEXT_MEANS: u64 = 1;
const STREAM_SAMPLES: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn orthonormal_rows(count: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(count);
    while rows.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for r in &rows {
            let d: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= d * b);
        }
        let norm = libm::sqrt(v.iter().map(|a| a * a).sum::<f64>());
        if norm > 1e-6 {
            v.iter_mut().for_each(|a| *a /= norm);
            rows.push(v);
        }
    }
    rows
}

impl SynthGenerator {
    pub fn new(cfg: SynthConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.means_per_modality();
        let audio_means = orthonormal_rows(n, cfg.feature_dim, &mut stream(seed, STREAM_AUDIO_MEANS));
        let text_means = orthonormal_rows(n, cfg.feature_dim, &mut stream(seed, STREAM_TEXT_MEANS));
        Ok(Self {
            cfg,
            seed,
            audio_means,
            text_means,
        })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    /// Unit-norm audio means: one per class (additive) or per bit (xor).
    pub fn audio_means(&self) -> &[Vec<f64>] {
        &self.audio_means
    }

    pub fn text_means(&self) -> &[Vec<f64>] {
        &self.text_means
    }

    /// Latent `(audio, text)` mean indices for the `index`-th sample of a class.
    pub fn latent(&self, class: usize, index: usize) -> (usize, usize) {
        match self.cfg.mode {
            SynthMode::Additive => (class, class),
            SynthMode::Xor => {
                let a = index % 2;
                (a, a ^ class)
            }
        }
    }

    pub fn generate(&self) -> Result<Dataset> {
        let cfg = &self.cfg;
        let mut rng = stream(self.seed, STREAM_SAMPLES);
        let mut samples = Vec::with_capacity(NUM_SESSIONS as usize * cfg.num_emotions * cfg.per_class_per_session);
        for session in 1..=NUM_SESSIONS {
            for class in 0..cfg.num_emotions {
                for i in 0..cfg.per_class_per_session {
                    let (ka, kt) = self.latent(class, i);
                    let audio = self.sequence(&self.audio_means[ka], cfg.audio_signal, &mut rng)?;
                    let text = self.sequence(&self.text_means[kt], cfg.text_signal, &mut rng)?;
                    samples.push(Sample {
                        utterance_id: format!("Ses{session:02}_{:05}", samples.len()),
                        session,
                        emotion: class,
                        audio,
                        text,
                    });
                }
            }
        }
        Dataset::new(cfg.num_emotions, samples)
    }

    fn sequence(&self, mean: &[f64], signal: f64, rng: &mut ChaCha8Rng) -> Result<FeatureSequence> {
        let cfg = &self.cfg;
        let frames = rng.random_range(cfg.min_frames..=cfg.max_frames);
        let mut values = vec![0.0; frames * cfg.feature_dim];
        for row in values.chunks_mut(cfg.feature_dim) {
            let informative = cfg.signal_fraction >= 1.0 || rng.random::<f64>() < cfg.signal_fraction;
            let shift = if informative { signal } else { 0.0 };
            for (v, &m) in row.iter_mut().zip(mean) {
                let z: f64 = rng.sample(StandardNormal);
                *v = (shift * m + cfg.noise * z) as f32 as f64;
            }
        }
        FeatureSequence::new(frames, cfg.feature_dim, values)
    }
}

/// Generates a dataset in one call.
pub fn synth_generate(cfg: &SynthConfig, seed: u64) -> Result<Dataset> {
    SynthGenerator::new(cfg.clone(), seed)?.generate()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn means_are_orthonormal() {
        let g = SynthGenerator::new(SynthConfig::default(), 3).unwrap();
        for means in [g.audio_means(), g.text_means()] {
            for i in 0..means.len() {
                for j in 0..means.len() {
                    let d: f64 = means[i].iter().zip(&means[j]).map(|(a, b)| a * b).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((d - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let cfg = SynthConfig::default();
        assert_eq!(synth_generate(&cfg, 11).unwrap(), synth_generate(&cfg, 11).unwrap());
        assert_ne!(synth_generate(&cfg, 11).unwrap(), synth_generate(&cfg, 12).unwrap());
    }

    #[test]
    fn layout_and_counts() {
        let cfg = SynthConfig {
            per_class_per_session: 3,
            min_frames: 2,
            max_frames: 5,
            ..SynthConfig::default()
        };
        let ds = synth_generate(&cfg, 0).unwrap();
        assert_eq!(ds.len(), 5 * 4 * 3);
        assert_eq!(ds.meta().class_counts, vec![15; 4]);
        assert_eq!(ds.meta().sessions, vec![1, 2, 3, 4, 5]);
        for s in &ds.samples {
            assert!((2..=5).contains(&s.audio.frames()));
            assert!(s.audio.values().iter().all(|&v| v as f32 as f64 == v));
        }
    }

    #[test]
    fn rejects_invalid_configs() {
        let ok = SynthConfig::default();
        assert!(SynthConfig { audio_signal: 1.5, ..ok.clone() }.validate().is_err());
        assert!(SynthConfig { noise: 0.0, ..ok.clone() }.validate().is_err());
        assert!(SynthConfig { min_frames: 4, max_frames: 3, ..ok.clone() }.validate().is_err());
        assert!(SynthConfig { mode: SynthMode::Xor, ..ok.clone() }.validate().is_err());
        assert!(SynthConfig { feature_dim: 3, ..ok }.validate().is_err());
    }

    #[test]
    fn xor_latents_cover_all_pairs() {
        let cfg = SynthConfig {
            mode: SynthMode::Xor,
            num_emotions: 2,
            ..SynthConfig::default()
        };
        let g = SynthGenerator::new(cfg, 0).unwrap();
        for class in 0..2 {
            for i in 0..4 {
                let (a, b) = g.latent(class, i);
                assert_eq!(a ^ b, class);
            }
        }
    }
}
