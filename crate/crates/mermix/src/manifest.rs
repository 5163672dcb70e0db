//! JSON sidecar written next to a feature file as `<file>.json`.
//!
//! The sidecar is informative: class names, counts, the generator settings
//! of synthetic data, and a CRC-32 of the feature file. Readers that find a
//! sidecar verify the checksum, which catches damage to the float payload
//! that the record framing alone cannot see.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use mermix_core::{Dataset, SynthConfig, SynthMode};
use serde::{Deserialize, Serialize};

use crate::error::{io, Error, Result};
use crate::mef;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthInfo {
    pub seed: u64,
    pub mode: String,
    pub num_emotions: usize,
    pub feature_dim: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub audio_informativeness: f64,
    pub text_informativeness: f64,
    pub noise: f64,
    pub per_class_per_session: usize,
    pub signal_fraction: f64,
}

impl SynthInfo {
    pub fn new(cfg: &SynthConfig, seed: u64) -> Self {
        Self {
            seed,
            mode: match cfg.mode {
                SynthMode::Additive => "additive".into(),
                SynthMode::Xor => "xor".into(),
            },
            num_emotions: cfg.num_emotions,
            feature_dim: cfg.feature_dim,
            min_frames: cfg.min_frames,
            max_frames: cfg.max_frames,
            audio_informativeness: cfg.audio_signal,
            text_informativeness: cfg.text_signal,
            noise: cfg.noise,
            per_class_per_session: cfg.per_class_per_session,
            signal_fraction: cfg.signal_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub utterance_id: String,
    pub class: String,
    pub session: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub num_emotions: usize,
    pub class_names: Vec<String>,
    pub feature_dim: usize,
    pub utterances: usize,
    pub records: usize,
    /// CRC-32 of the whole feature file, lowercase hex.
    pub crc32: String,
    pub class_counts: BTreeMap<String, usize>,
    pub session_counts: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthInfo>,
    pub entries: Vec<Entry>,
}

impl Manifest {
    pub fn describe(ds: &Dataset, file_bytes: &[u8], synth: Option<SynthInfo>) -> Self {
        let meta = ds.meta();
        let class_counts = meta
            .class_names
            .iter()
            .cloned()
            .zip(meta.class_counts.iter().copied())
            .collect();
        let mut session_counts = BTreeMap::new();
        for s in &ds.samples {
            *session_counts.entry(s.session.to_string()).or_insert(0) += 1;
        }
        Self {
            format: "MEF1".into(),
            num_emotions: ds.num_emotions,
            class_names: ds.class_names.clone(),
            feature_dim: ds.feature_dim().unwrap_or(0),
            utterances: ds.len(),
            records: 2 * ds.len(),
            crc32: format!("{:08x}", crc32fast::hash(file_bytes)),
            class_counts,
            session_counts,
            synth,
            entries: ds
                .samples
                .iter()
                .map(|s| Entry {
                    utterance_id: s.utterance_id.clone(),
                    class: ds.class_names[s.emotion].clone(),
                    session: s.session,
                    transcript: None,
                })
                .collect(),
        }
    }

    pub fn checksum(&self) -> Option<u32> {
        u32::from_str_radix(&self.crc32, 16).ok()
    }
}

pub fn sidecar_path(features: &Path) -> PathBuf {
    let mut p = features.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

pub fn write_manifest(features: &Path, manifest: &Manifest) -> Result<()> {
    let path = sidecar_path(features);
    let mut text = serde_json::to_string_pretty(manifest).map_err(|source| Error::Manifest {
        path: path.clone(),
        source,
    })?;
    text.push('\n');
    mef::write_atomic(&path, text.as_bytes())
}

pub fn read_manifest(features: &Path) -> Result<Option<Manifest>> {
    let path = sidecar_path(features);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(io(&path)(e)),
    };
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|source| Error::Manifest { path, source })
}

/// Writes the feature file and its sidecar.
pub fn save_dataset(ds: &Dataset, path: &Path, synth: Option<SynthInfo>) -> Result<Manifest> {
    let bytes = mef::write_features(ds, path)?;
    let manifest = Manifest::describe(ds, &bytes, synth);
    write_manifest(path, &manifest)?;
    Ok(manifest)
}

/// Reads a feature file, verifying it against its sidecar when one exists.
///
/// The class count comes from `num_emotions`, else the sidecar, else the
/// labels present.
pub fn load_dataset(path: &Path, num_emotions: Option<usize>) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(io(path))?;
    let manifest = read_manifest(path)?;
    if let Some(expected) = manifest.as_ref().and_then(Manifest::checksum) {
        let actual = crc32fast::hash(&bytes);
        if actual != expected {
            return Err(Error::Checksum {
                path: path.to_path_buf(),
                expected,
                actual,
            });
        }
    }
    let format = |source| Error::Format {
        path: path.to_path_buf(),
        source,
    };
    let records = mef::decode(&bytes).map_err(format)?;
    let e = num_emotions.or(manifest.as_ref().map(|m| m.num_emotions));
    let mut ds = mef::records_to_dataset(&records, e).map_err(format)?;
    if let Some(m) = manifest {
        if m.class_names.len() == ds.num_emotions {
            ds.class_names = m.class_names;
        }
    }
    Ok(ds)
}
