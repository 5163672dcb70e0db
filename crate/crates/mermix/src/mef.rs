//! The MEF1 feature container.
//!
//! ```text
//! header   "MEF1" | 0x01 (little endian) | record count u32
//! record   id length u16 | id (UTF-8) | session u8 | emotion u8 |
//!          modality u8 (0 audio, 1 text) | T u32 | C u32 | T*C f32, row-major
//! ```
//!
//! All integers and floats are little endian. A dataset occupies two records
//! per utterance, audio first.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use mermix_core::{Dataset, FeatureSequence, ModalityKind, Sample};

use crate::error::{io, Error, Result};

pub const MAGIC: [u8; 4] = *b"MEF1";
pub const LITTLE_ENDIAN: u8 = 0x01;
pub const HEADER_LEN: usize = 9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic {0:?}, expected \"MEF1\"")]
    BadMagic(Vec<u8>),
    #[error("unsupported endianness marker {0:#04x}")]
    Endianness(u8),
    #[error("file ends inside the {HEADER_LEN}-byte header")]
    TruncatedHeader,
    #[error("record {index}: {reason}")]
    Record { index: usize, reason: String },
    #[error("{0} trailing bytes after the last record")]
    Trailing(usize),
    #[error("records {first} and {second} share key ({id}, {modality:?})")]
    Duplicate {
        first: usize,
        second: usize,
        id: String,
        modality: ModalityKind,
    },
    #[error("record {index}: utterance `{id}` has no {missing:?} record")]
    Orphan {
        index: usize,
        id: String,
        missing: ModalityKind,
    },
    #[error("records {audio} and {text}: utterance `{id}` disagrees on {field}")]
    Mismatch {
        audio: usize,
        text: usize,
        id: String,
        field: &'static str,
    },
    #[error("{0} records do not fit the u32 record count")]
    TooManyRecords(usize),
    #[error(transparent)]
    Dataset(#[from] mermix_core::Error),
}

/// One `(utterance, modality)` feature sequence as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub utterance_id: String,
    pub session: u8,
    pub emotion: u8,
    pub modality: ModalityKind,
    pub frames: u32,
    pub dim: u32,
    pub values: Vec<f32>,
}

impl FeatureRecord {
    pub fn encoded_len(&self) -> usize {
        2 + self.utterance_id.len() + 3 + 8 + 4 * self.values.len()
    }
}

fn modality_byte(m: ModalityKind) -> u8 {
    match m {
        ModalityKind::Audio => 0,
        ModalityKind::Text => 1,
    }
}

pub fn encode(records: &[FeatureRecord]) -> Result<Vec<u8>, FormatError> {
    let count = u32::try_from(records.len()).map_err(|_| FormatError::TooManyRecords(records.len()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + records.iter().map(FeatureRecord::encoded_len).sum::<usize>());
    out.extend_from_slice(&MAGIC);
    out.push(LITTLE_ENDIAN);
    out.extend_from_slice(&count.to_le_bytes());
    for (index, r) in records.iter().enumerate() {
        let bad = |reason: String| FormatError::Record { index, reason };
        let id_len = u16::try_from(r.utterance_id.len())
            .map_err(|_| bad(format!("utterance id of {} bytes exceeds u16", r.utterance_id.len())))?;
        if r.values.len() as u64 != u64::from(r.frames) * u64::from(r.dim) {
            return Err(bad(format!("{} values for T={} C={}", r.values.len(), r.frames, r.dim)));
        }
        out.extend_from_slice(&id_len.to_le_bytes());
        out.extend_from_slice(r.utterance_id.as_bytes());
        out.extend_from_slice(&[r.session, r.emotion, modality_byte(r.modality)]);
        out.extend_from_slice(&r.frames.to_le_bytes());
        out.extend_from_slice(&r.dim.to_le_bytes());
        for v in &r.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Reads the header and returns the declared record count.
pub fn decode_header(bytes: &[u8]) -> Result<u32, FormatError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(FormatError::BadMagic(bytes[..4].to_vec()));
        }
        return Err(FormatError::TruncatedHeader);
    }
    if bytes[..4] != MAGIC {
        return Err(FormatError::BadMagic(bytes[..4].to_vec()));
    }
    if bytes[4] != LITTLE_ENDIAN {
        return Err(FormatError::Endianness(bytes[4]));
    }
    Ok(u32::from_le_bytes([bytes[5], bytes[6], bytes[7], bytes[8]]))
}

/// Parses every record, checking framing, field ranges and key uniqueness.
pub fn decode(bytes: &[u8]) -> Result<Vec<FeatureRecord>, FormatError> {
    let count = decode_header(bytes)? as usize;
    let mut cur = Cursor { bytes, pos: HEADER_LEN };
    let mut records = Vec::with_capacity(count.min(bytes.len() / 16));
    let mut seen: HashMap<(String, ModalityKind), usize> = HashMap::new();
    for index in 0..count {
        let record = decode_record(&mut cur, index)?;
        let key = (record.utterance_id.clone(), record.modality);
        if let Some(&first) = seen.get(&key) {
            return Err(FormatError::Duplicate {
                first,
                second: index,
                id: key.0,
                modality: key.1,
            });
        }
        seen.insert(key, index);
        records.push(record);
    }
    if cur.remaining() > 0 {
        return Err(FormatError::Trailing(cur.remaining()));
    }
    Ok(records)
}

fn decode_record(cur: &mut Cursor<'_>, index: usize) -> Result<FeatureRecord, FormatError> {
    let bad = |reason: String| FormatError::Record { index, reason };
    let truncated = |what: &str| bad(format!("truncated {what}"));
    let id_len = cur.u16().ok_or_else(|| truncated("id length"))?;
    let id = cur.take(id_len.into()).ok_or_else(|| truncated("utterance id"))?;
    let utterance_id = std::str::from_utf8(id)
        .map_err(|e| bad(format!("utterance id is not UTF-8: {e}")))?
        .to_string();
    if utterance_id.is_empty() {
        return Err(bad("empty utterance id".into()));
    }
    let session = cur.u8().ok_or_else(|| truncated("session"))?;
    if !(1..=mermix_core::data::NUM_SESSIONS).contains(&session) {
        return Err(bad(format!("session {session} outside 1..={}", mermix_core::data::NUM_SESSIONS)));
    }
    let emotion = cur.u8().ok_or_else(|| truncated("emotion"))?;
    let modality = match cur.u8().ok_or_else(|| truncated("modality"))? {
        0 => ModalityKind::Audio,
        1 => ModalityKind::Text,
        m => return Err(bad(format!("modality {m} is neither 0 (audio) nor 1 (text)"))),
    };
    let frames = cur.u32().ok_or_else(|| truncated("frame count"))?;
    let dim = cur.u32().ok_or_else(|| truncated("feature dim"))?;
    if frames == 0 || dim == 0 {
        return Err(bad(format!("empty sequence T={frames} C={dim}")));
    }
    let n = u64::from(frames) * u64::from(dim);
    if n * 4 > cur.remaining() as u64 {
        return Err(bad(format!(
            "T={frames} C={dim} needs {} bytes, {} left",
            n * 4,
            cur.remaining()
        )));
    }
    let raw = cur.take(n as usize * 4).ok_or_else(|| truncated("values"))?;
    let mut values = Vec::with_capacity(n as usize);
    for (i, b) in raw.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        if !v.is_finite() {
            return Err(bad(format!("non-finite value at frame {} column {}", i / dim as usize, i % dim as usize)));
        }
        values.push(v);
    }
    Ok(FeatureRecord {
        utterance_id,
        session,
        emotion,
        modality,
        frames,
        dim,
        values,
    })
}

/// Two records per sample, audio then text, values narrowed to `f32`.
pub fn dataset_records(ds: &Dataset) -> Result<Vec<FeatureRecord>, FormatError> {
    let mut out = Vec::with_capacity(2 * ds.len());
    for (i, s) in ds.samples.iter().enumerate() {
        let emotion = u8::try_from(s.emotion).map_err(|_| FormatError::Record {
            index: 2 * i,
            reason: format!("emotion {} does not fit a byte", s.emotion),
        })?;
        for (modality, seq) in [(ModalityKind::Audio, &s.audio), (ModalityKind::Text, &s.text)] {
            out.push(FeatureRecord {
                utterance_id: s.utterance_id.clone(),
                session: s.session,
                emotion,
                modality,
                frames: seq.frames() as u32,
                dim: seq.dim() as u32,
                values: seq.values().iter().map(|&v| v as f32).collect(),
            });
        }
    }
    Ok(out)
}

/// Pairs audio and text records into samples, in order of first appearance.
///
/// `num_emotions` defaults to one past the largest label (at least 2).
pub fn records_to_dataset(records: &[FeatureRecord], num_emotions: Option<usize>) -> Result<Dataset, FormatError> {
    let mut order: Vec<&str> = Vec::new();
    let mut pairs: HashMap<&str, [Option<usize>; 2]> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        let slot = pairs.entry(&r.utterance_id).or_insert_with(|| {
            order.push(&r.utterance_id);
            [None, None]
        });
        slot[r.modality as usize] = Some(i);
    }
    if let Some(first) = records.first() {
        if let Some((index, r)) = records.iter().enumerate().find(|(_, r)| r.dim != first.dim) {
            return Err(FormatError::Record {
                index,
                reason: format!("feature dim {} differs from record 0's {}", r.dim, first.dim),
            });
        }
    }
    let e = num_emotions.unwrap_or_else(|| records.iter().map(|r| r.emotion as usize + 1).max().unwrap_or(2).max(2));
    let mut samples = Vec::with_capacity(order.len());
    for id in order {
        let [a, t] = pairs[id];
        let (a, t) = match (a, t) {
            (Some(a), Some(t)) => (a, t),
            (Some(index), None) | (None, Some(index)) => {
                return Err(FormatError::Orphan {
                    index,
                    id: id.to_string(),
                    missing: if a.is_none() { ModalityKind::Audio } else { ModalityKind::Text },
                })
            }
            (None, None) => unreachable!("every id comes from a record"),
        };
        let (ra, rt) = (&records[a], &records[t]);
        for (field, differs) in [("emotion", ra.emotion != rt.emotion), ("session", ra.session != rt.session)] {
            if differs {
                return Err(FormatError::Mismatch {
                    audio: a,
                    text: t,
                    id: id.to_string(),
                    field,
                });
            }
        }
        if ra.emotion as usize >= e {
            return Err(FormatError::Record {
                index: a,
                reason: format!("emotion {} outside 0..{e}", ra.emotion),
            });
        }
        let seq = |r: &FeatureRecord| {
            FeatureSequence::new(r.frames as usize, r.dim as usize, r.values.iter().map(|&v| f64::from(v)).collect())
        };
        samples.push(Sample {
            utterance_id: id.to_string(),
            session: ra.session,
            emotion: ra.emotion as usize,
            audio: seq(ra)?,
            text: seq(rt)?,
        });
    }
    Ok(Dataset::new(e, samples)?)
}

/// Writes `ds` to `path` through a temporary sibling file.
pub fn write_features(ds: &Dataset, path: &Path) -> Result<Vec<u8>> {
    let bytes = dataset_records(ds)
        .and_then(|r| encode(&r))
        .map_err(|source| Error::Format {
            path: path.to_path_buf(),
            source,
        })?;
    write_atomic(path, &bytes)?;
    Ok(bytes)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io(&tmp))?;
    f.write_all(bytes).map_err(io(&tmp))?;
    f.sync_all().map_err(io(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io(path))
}

pub fn read_records(path: &Path) -> Result<Vec<FeatureRecord>> {
    let bytes = fs::read(path).map_err(io(path))?;
    decode(&bytes).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a dataset without consulting any sidecar manifest.
pub fn read_features(path: &Path, num_emotions: Option<usize>) -> Result<Dataset> {
    let records = read_records(path)?;
    records_to_dataset(&records, num_emotions).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })
}
