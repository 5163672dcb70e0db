use std::fs;

use mermix::manifest::{load_dataset, read_manifest, save_dataset, sidecar_path, SynthInfo};
use mermix::mef::{self, FeatureRecord, FormatError, HEADER_LEN};
use mermix::Error;
use mermix_core::{synth_generate, Dataset, FeatureSequence, ModalityKind, Sample, SynthConfig};
use proptest::prelude::*;

fn record(id: &str, modality: ModalityKind, frames: u32, dim: u32) -> FeatureRecord {
    FeatureRecord {
        utterance_id: id.into(),
        session: 1,
        emotion: 0,
        modality,
        frames,
        dim,
        values: (0..frames * dim).map(|v| v as f32 * 0.25).collect(),
    }
}

fn pair(id: &str, frames: u32, dim: u32) -> [FeatureRecord; 2] {
    [record(id, ModalityKind::Audio, frames, dim), record(id, ModalityKind::Text, frames + 1, dim)]
}

#[test]
fn empty_file_is_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.mef");
    let ds = Dataset::new(4, Vec::new()).unwrap();
    let bytes = mef::write_features(&ds, &path).unwrap();
    assert_eq!(bytes, b"MEF1\x01\x00\x00\x00\x00");
    assert_eq!(fs::metadata(&path).unwrap().len(), HEADER_LEN as u64);
    assert!(mef::read_records(&path).unwrap().is_empty());
    assert!(mef::read_features(&path, Some(4)).unwrap().is_empty());
}

#[test]
fn record_size_arithmetic() {
    let r = record("Ses01F_impro01_F000", ModalityKind::Audio, 2, 3);
    let bytes = mef::encode(std::slice::from_ref(&r)).unwrap();
    assert_eq!(bytes.len(), 9 + (2 + 19) + 3 + 8 + 24);
    assert_eq!(r.encoded_len() + HEADER_LEN, bytes.len());
    assert_eq!(&bytes[5..9], &1u32.to_le_bytes());
    assert_eq!(&bytes[9..11], &19u16.to_le_bytes());
    let tail = &bytes[bytes.len() - 4..];
    assert_eq!(f32::from_le_bytes(tail.try_into().unwrap()), 1.25);
}

#[test]
fn header_errors() {
    assert_eq!(mef::decode(b"MEF1\x01\x00"), Err(FormatError::TruncatedHeader));
    assert!(matches!(mef::decode(b"MEF2\x01\0\0\0\0"), Err(FormatError::BadMagic(_))));
    assert_eq!(mef::decode(b"MEF1\x02\0\0\0\0"), Err(FormatError::Endianness(2)));
    assert_eq!(mef::decode(b"MEF1\x01\0\0\0\0\0"), Err(FormatError::Trailing(1)));
    let err = mef::decode(b"MEF1\x01\x01\0\0\0").unwrap_err();
    assert!(err.to_string().starts_with("record 0: truncated"), "{err}");
}

#[test]
fn duplicate_key_names_both_records() {
    let [a, t] = pair("u1", 2, 2);
    let [b, _] = pair("u2", 2, 2);
    let bytes = mef::encode(&[a.clone(), t, b, a]).unwrap();
    let err = mef::decode(&bytes).unwrap_err();
    assert!(matches!(err, FormatError::Duplicate { first: 0, second: 3, .. }), "{err:?}");
    assert!(err.to_string().contains("records 0 and 3"));
}

#[test]
fn orphan_names_its_record() {
    let [a, t] = pair("u1", 2, 2);
    let [b, _] = pair("u2", 2, 2);
    let err = mef::records_to_dataset(&[a, t, b], None).unwrap_err();
    assert!(
        matches!(err, FormatError::Orphan { index: 2, missing: ModalityKind::Text, .. }),
        "{err:?}"
    );
    assert!(err.to_string().starts_with("record 2:"));
}

#[test]
fn mismatch_names_both_records() {
    let [a, mut t] = pair("u1", 2, 2);
    t.emotion = 1;
    let err = mef::records_to_dataset(&[t, a], None).unwrap_err();
    assert!(
        matches!(err, FormatError::Mismatch { audio: 1, text: 0, field: "emotion", .. }),
        "{err:?}"
    );
    let [a, mut t] = pair("u1", 2, 2);
    t.session = 2;
    let err = mef::records_to_dataset(&[a, t], None).unwrap_err();
    assert!(matches!(err, FormatError::Mismatch { field: "session", .. }));
}

#[test]
fn field_range_errors() {
    let cases: Vec<(Box<dyn Fn(&mut FeatureRecord)>, &str)> = vec![
        (Box::new(|r| r.session = 0), "session 0"),
        (Box::new(|r| r.session = 6), "session 6"),
        (Box::new(|r| r.utterance_id.clear()), "empty utterance id"),
        (Box::new(|r| r.values[1] = f32::NAN), "non-finite value at frame 0 column 1"),
        (Box::new(|r| r.values[3] = f32::INFINITY), "non-finite value at frame 1 column 1"),
    ];
    for (damage, needle) in cases {
        let [a, mut t] = pair("u1", 2, 2);
        damage(&mut t);
        let err = mef::decode(&mef::encode(&[a, t]).unwrap()).unwrap_err();
        assert!(err.to_string().starts_with("record 1:"), "{err}");
        assert!(err.to_string().contains(needle), "{err}");
    }
    let [a, mut t] = pair("u1", 2, 2);
    t.dim = 3;
    t.values = vec![0.0; 9];
    let err = mef::records_to_dataset(&[a, t], None).unwrap_err();
    assert!(err.to_string().starts_with("record 1: feature dim 3"), "{err}");
    let [mut a, mut t] = pair("u1", 2, 2);
    a.emotion = 3;
    t.emotion = 3;
    assert!(mef::records_to_dataset(&[a.clone(), t.clone()], None).is_ok());
    let err = mef::records_to_dataset(&[a, t], Some(3)).unwrap_err();
    assert!(err.to_string().contains("emotion 3 outside 0..3"), "{err}");
}

#[test]
fn class_count_inference() {
    let [a, t] = pair("u1", 1, 1);
    assert_eq!(mef::records_to_dataset(&[a.clone(), t.clone()], None).unwrap().num_emotions, 2);
    assert_eq!(mef::records_to_dataset(&[a, t], Some(5)).unwrap().num_emotions, 5);
}

fn id_strategy() -> impl Strategy<Value = String> {
    prop_oneof![
        "[A-Za-z0-9_]{1,24}",
        "\\PC{1,8}",
    ]
}

fn value_strategy() -> impl Strategy<Value = f32> {
    prop_oneof![
        any::<f32>().prop_filter("finite", |v| v.is_finite()),
        Just(-0.0f32),
        Just(f32::MIN_POSITIVE / 4.0),
        Just(f32::MAX),
    ]
}

fn sample_strategy(dim: usize) -> impl Strategy<Value = (u8, u8, Vec<f32>, Vec<f32>)> {
    (1u8..=5, 0u8..4, 1usize..5, 1usize..5).prop_flat_map(move |(session, emotion, ta, tt)| {
        (
            Just(session),
            Just(emotion),
            prop::collection::vec(value_strategy(), ta * dim),
            prop::collection::vec(value_strategy(), tt * dim),
        )
    })
}

fn dataset_strategy(n: usize) -> impl Strategy<Value = Vec<FeatureRecord>> {
    (1usize..6).prop_flat_map(move |dim| {
        (
            prop::collection::btree_set(id_strategy(), n),
            prop::collection::vec(sample_strategy(dim), n),
        )
            .prop_map(move |(ids, samples)| {
                let mut out = Vec::new();
                for (id, (session, emotion, audio, text)) in ids.into_iter().zip(samples) {
                    for (modality, values) in [(ModalityKind::Audio, audio), (ModalityKind::Text, text)] {
                        out.push(FeatureRecord {
                            utterance_id: id.clone(),
                            session,
                            emotion,
                            modality,
                            frames: (values.len() / dim) as u32,
                            dim: dim as u32,
                            values,
                        });
                    }
                }
                out
            })
    })
}

fn bits(records: &[FeatureRecord]) -> Vec<Vec<u32>> {
    records.iter().map(|r| r.values.iter().map(|v| v.to_bits()).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fifty_record_round_trip_is_bit_exact(records in dataset_strategy(25)) {
        prop_assert_eq!(records.len(), 50);
        let bytes = mef::encode(&records).unwrap();
        prop_assert_eq!(bytes.len(), HEADER_LEN + records.iter().map(FeatureRecord::encoded_len).sum::<usize>());
        let back = mef::decode(&bytes).unwrap();
        prop_assert_eq!(bits(&back), bits(&records));
        for (x, y) in back.iter().zip(&records) {
            prop_assert_eq!(&x.utterance_id, &y.utterance_id);
            prop_assert_eq!((x.session, x.emotion, x.modality, x.frames, x.dim), (y.session, y.emotion, y.modality, y.frames, y.dim));
        }
        let ds = mef::records_to_dataset(&back, Some(4)).unwrap();
        prop_assert_eq!(ds.len(), 25);
        let again = mef::encode(&mef::dataset_records(&ds).unwrap()).unwrap();
        prop_assert_eq!(again, bytes);
    }
}

fn small_dataset() -> Dataset {
    let samples = (0..3)
        .map(|i| Sample {
            utterance_id: format!("utt{i}"),
            session: i as u8 + 1,
            emotion: i % 2,
            audio: FeatureSequence::new(2, 3, (0..6).map(|v| v as f64 + 0.5).collect()).unwrap(),
            text: FeatureSequence::new(1 + i, 3, (0..3 * (1 + i)).map(|v| -(v as f64) - 0.25).collect()).unwrap(),
        })
        .collect();
    Dataset::new(2, samples).unwrap()
}

/// Byte ranges of the float payloads.
fn payload_ranges(records: &[FeatureRecord]) -> Vec<std::ops::Range<usize>> {
    let mut pos = HEADER_LEN;
    let mut out = Vec::new();
    for r in records {
        let start = pos + 2 + r.utterance_id.len() + 3 + 8;
        pos += r.encoded_len();
        out.push(start..pos);
    }
    out
}

#[test]
fn corruption_is_detected_outside_payload() {
    let ds = small_dataset();
    let records = mef::dataset_records(&ds).unwrap();
    let bytes = mef::encode(&records).unwrap();
    let payload = payload_ranges(&records);
    let mut undetected = 0;
    for offset in 0..bytes.len() {
        for mask in [0x01u8, 0x80, 0xff] {
            let mut damaged = bytes.clone();
            damaged[offset] ^= mask;
            let result = mef::decode(&damaged).and_then(|r| mef::records_to_dataset(&r, Some(2)));
            if let Ok(got) = result {
                undetected += 1;
                assert!(
                    payload.iter().any(|r| r.contains(&offset)),
                    "flip {mask:#04x} at framing offset {offset} went unnoticed"
                );
                assert_eq!(got.len(), ds.len());
                for (g, s) in got.samples.iter().zip(&ds.samples) {
                    assert_eq!((&g.utterance_id, g.session, g.emotion), (&s.utterance_id, s.session, s.emotion));
                    assert_eq!((g.audio.frames(), g.text.frames()), (s.audio.frames(), s.text.frames()));
                }
            }
        }
    }
    assert!(undetected > 0);
}

#[test]
fn sidecar_checksum_catches_every_flip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.mef");
    let ds = small_dataset();
    save_dataset(&ds, &path, None).unwrap();
    let bytes = fs::read(&path).unwrap();
    assert_eq!(load_dataset(&path, None).unwrap(), ds);
    for offset in 0..bytes.len() {
        let mut damaged = bytes.clone();
        damaged[offset] ^= 0x01;
        fs::write(&path, &damaged).unwrap();
        let err = load_dataset(&path, None).unwrap_err();
        assert!(matches!(err, Error::Checksum { .. }), "offset {offset}: {err}");
    }
    fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
    assert!(matches!(load_dataset(&path, None), Err(Error::Checksum { .. })));
    fs::remove_file(sidecar_path(&path)).unwrap();
    assert!(matches!(load_dataset(&path, None), Err(Error::Format { .. })));
}

#[test]
fn manifest_describes_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synth.mef");
    let cfg = SynthConfig {
        text_signal: 0.0,
        per_class_per_session: 2,
        ..SynthConfig::default()
    };
    let ds = synth_generate(&cfg, 11).unwrap();
    let m = save_dataset(&ds, &path, Some(SynthInfo::new(&cfg, 11))).unwrap();
    assert_eq!(read_manifest(&path).unwrap().as_ref(), Some(&m));
    assert_eq!(m.utterances, 40);
    assert_eq!(m.records, 80);
    assert_eq!(m.class_counts.values().copied().collect::<Vec<_>>(), vec![10; 4]);
    assert_eq!(m.session_counts.values().copied().collect::<Vec<_>>(), vec![8; 5]);
    assert_eq!(m.checksum(), Some(crc32fast::hash(&fs::read(&path).unwrap())));
    let synth = m.synth.unwrap();
    assert_eq!(synth.text_informativeness, 0.0);
    assert_eq!(synth.audio_informativeness, 1.0);
    assert_eq!(synth.seed, 11);
    let back = load_dataset(&path, None).unwrap();
    assert_eq!(back, ds);
    assert_eq!(back.class_names, m.class_names);
}
