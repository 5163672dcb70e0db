//! Flat `key=value` rendering of run configurations.
//!
//! Floats print in Rust's shortest round-trip form, so parsing a dump gives
//! back bit-identical values.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use mermix_core::{FusionConfig, FusionKind, Modality, SynthConfig, SynthMode, TrainConfig};

pub type Pairs = Vec<(String, String)>;

fn push(out: &mut Pairs, key: &str, value: impl Display) {
    out.push((key.to_string(), value.to_string()));
}

pub fn fusion_name(k: FusionKind) -> &'static str {
    match k {
        FusionKind::CrossAttention => "ca",
        FusionKind::Concat => "fc",
    }
}

pub fn modality_name(m: Modality) -> &'static str {
    match m {
        Modality::Audio => "audio",
        Modality::Text => "text",
        Modality::Both => "both",
    }
}

pub fn model_pairs(m: &FusionConfig) -> Pairs {
    let mut out = Pairs::new();
    push(&mut out, "model.fusion", fusion_name(m.fusion));
    push(&mut out, "model.modality", modality_name(m.modality));
    push(&mut out, "model.feature_dim", m.feature_dim);
    push(&mut out, "model.num_heads", m.num_heads);
    push(&mut out, "model.num_layers", m.num_layers);
    push(&mut out, "model.num_emotions", m.num_emotions);
    push(&mut out, "model.use_output_projection", m.use_output_projection);
    push(&mut out, "model.dropout_rate", m.dropout_rate);
    push(&mut out, "model.head_hidden", m.head_hidden);
    out
}

pub fn train_pairs(t: &TrainConfig) -> Pairs {
    let mut out = Pairs::new();
    push(&mut out, "train.seed", t.seed);
    push(&mut out, "train.epochs", t.epochs);
    push(&mut out, "train.batch_size", t.batch_size);
    push(&mut out, "train.learning_rate", t.learning_rate);
    push(&mut out, "train.weight_decay", t.weight_decay);
    push(&mut out, "train.beta1", t.beta1);
    push(&mut out, "train.beta2", t.beta2);
    push(&mut out, "train.eps", t.eps);
    push(&mut out, "train.lambda_main", t.lambda_main);
    push(&mut out, "train.lambda_aux1", t.lambda_aux1);
    push(&mut out, "train.lambda_aux2", t.lambda_aux2);
    push(&mut out, "train.enable_aux1", t.enable_aux1);
    push(&mut out, "train.enable_aux2", t.enable_aux2);
    push(
        &mut out,
        "train.grad_clip_norm",
        t.grad_clip_norm.map_or("none".to_string(), |v| v.to_string()),
    );
    out
}

pub fn synth_pairs(s: &SynthConfig, seed: u64) -> Pairs {
    let mut out = Pairs::new();
    push(&mut out, "synth.seed", seed);
    push(
        &mut out,
        "synth.mode",
        match s.mode {
            SynthMode::Additive => "additive",
            SynthMode::Xor => "xor",
        },
    );
    push(&mut out, "synth.num_emotions", s.num_emotions);
    push(&mut out, "synth.feature_dim", s.feature_dim);
    push(&mut out, "synth.min_frames", s.min_frames);
    push(&mut out, "synth.max_frames", s.max_frames);
    push(&mut out, "synth.audio_signal", s.audio_signal);
    push(&mut out, "synth.text_signal", s.text_signal);
    push(&mut out, "synth.noise", s.noise);
    push(&mut out, "synth.per_class_per_session", s.per_class_per_session);
    push(&mut out, "synth.signal_fraction", s.signal_fraction);
    out
}

pub fn render(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

pub fn parse(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: `{line}` is not key=value", n + 1))?;
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(format!("line {}: duplicate key `{k}`", n + 1));
        }
    }
    Ok(out)
}

fn get<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T, String>
where
    T::Err: Display,
{
    let raw = map.get(key).ok_or_else(|| format!("missing key `{key}`"))?;
    raw.parse().map_err(|e| format!("`{key}={raw}`: {e}"))
}

pub fn model_from(map: &BTreeMap<String, String>) -> Result<FusionConfig, String> {
    let fusion = match map.get("model.fusion").map(String::as_str) {
        Some("ca") => FusionKind::CrossAttention,
        Some("fc") => FusionKind::Concat,
        other => return Err(format!("bad model.fusion {other:?}")),
    };
    let modality = match map.get("model.modality").map(String::as_str) {
        Some("audio") => Modality::Audio,
        Some("text") => Modality::Text,
        Some("both") => Modality::Both,
        other => return Err(format!("bad model.modality {other:?}")),
    };
    Ok(FusionConfig {
        feature_dim: get(map, "model.feature_dim")?,
        num_heads: get(map, "model.num_heads")?,
        num_layers: get(map, "model.num_layers")?,
        num_emotions: get(map, "model.num_emotions")?,
        use_output_projection: get(map, "model.use_output_projection")?,
        dropout_rate: get(map, "model.dropout_rate")?,
        fusion,
        modality,
        head_hidden: get(map, "model.head_hidden")?,
    })
}
