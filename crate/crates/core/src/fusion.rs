//! The downstream fusion network.
//!
//! `K` stacked layers of bidirectional multi-head cross-attention with
//! residual links, followed by masked temporal mean pooling of each modality,
//! concatenation `[audio, text]` into a `(B, 2C)` fusion embedding, and two
//! classification heads: the `E`-way emotion head and the `E^2`-way head
//! predicting the (audio class, text class) combination of recombined pairs.
//!
//! Within a layer both branches read the same layer input:
//!
//! ```text
//! F_a' = F_a + MHA(q = F_a, kv = F_t)
//! F_t' = F_t + MHA(q = F_t, kv = F_a)
//! ```
//!
//! Padded key steps get an additive `-inf` before the softmax, so padding
//! never influences an output.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::batch::Batch;
use crate::error::{Error, Result, TensorError};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// How the two modalities are combined before the heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionKind {
    /// `K` cross-attention layers, then pool and concatenate.
    CrossAttention,
    /// Pool and concatenate the raw inputs (no attention).
    Concat,
}

/// Which modalities feed the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Audio,
    Text,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub feature_dim: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub num_emotions: usize,
    pub use_output_projection: bool,
    /// Dropout on attention weights during training; 0 disables it.
    pub dropout_rate: f64,
    pub fusion: FusionKind,
    pub modality: Modality,
    /// Width of a ReLU hidden layer in each head; 0 means a single affine map.
    pub head_hidden: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            feature_dim: 768,
            num_heads: 8,
            num_layers: 1,
            num_emotions: 4,
            use_output_projection: true,
            dropout_rate: 0.0,
            fusion: FusionKind::CrossAttention,
            modality: Modality::Both,
            head_hidden: 0,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.feature_dim == 0 || self.num_heads == 0 {
            return fail(format!(
                "feature_dim {} and num_heads {} must be positive",
                self.feature_dim, self.num_heads
            ));
        }
        if !self.feature_dim.is_multiple_of(self.num_heads) {
            return fail(format!(
                "feature_dim {} is not divisible by num_heads {}",
                self.feature_dim, self.num_heads
            ));
        }
        if self.num_layers == 0 {
            return fail("num_layers must be at least 1".into());
        }
        if self.num_emotions < 2 {
            return fail(format!("num_emotions must be at least 2, got {}", self.num_emotions));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.modality != Modality::Both && self.fusion == FusionKind::CrossAttention {
            return fail("cross-attention fusion needs both modalities".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.feature_dim / self.num_heads
    }

    pub fn embedding_dim(&self) -> usize {
        match self.modality {
            Modality::Both => 2 * self.feature_dim,
            _ => self.feature_dim,
        }
    }

    pub fn attention_layers(&self) -> usize {
        match self.fusion {
            FusionKind::CrossAttention => self.num_layers,
            FusionKind::Concat => 0,
        }
    }

    /// Number of scalar parameters implied by this configuration.
    pub fn parameter_count(&self) -> usize {
        let c = self.feature_dim;
        let proj = if self.use_output_projection { 4 } else { 3 };
        let branch = proj * (c * c + c);
        let head = |out: usize| match self.head_hidden {
            0 => self.embedding_dim() * out + out,
            h => self.embedding_dim() * h + h + h * out + out,
        };
        let e = self.num_emotions;
        self.attention_layers() * 2 * branch + head(e) + head(e * e)
    }
}

/// Projections of one attention branch. Weights are `(C_in, C_out)` and
/// applied as `x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchParams<T> {
    pub w_q: T,
    pub b_q: T,
    pub w_k: T,
    pub b_k: T,
    pub w_v: T,
    pub b_v: T,
    pub w_o: Option<T>,
    pub b_o: Option<T>,
}

/// One fusion layer: `audio` updates the audio stream (audio queries attend
/// to text), `text` updates the text stream.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub audio: BranchParams<T>,
    pub text: BranchParams<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams<T> {
    pub hidden: Option<(T, T)>,
    pub w: T,
    pub b: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams<T> {
    pub layers: Vec<LayerParams<T>>,
    pub main_head: HeadParams<T>,
    pub aux_head: HeadParams<T>,
}

/// All learnable tensors of the fusion network.
pub type FusionModelParams = FusionParams<Tensor>;

impl<T> BranchParams<T> {
    fn map<U>(&self, name: &str, f: &mut impl FnMut(&str, &T) -> U) -> BranchParams<U> {
        BranchParams {
            w_q: f(&format!("{name}.w_q"), &self.w_q),
            b_q: f(&format!("{name}.b_q"), &self.b_q),
            w_k: f(&format!("{name}.w_k"), &self.w_k),
            b_k: f(&format!("{name}.b_k"), &self.b_k),
            w_v: f(&format!("{name}.w_v"), &self.w_v),
            b_v: f(&format!("{name}.b_v"), &self.b_v),
            w_o: self.w_o.as_ref().map(|w| f(&format!("{name}.w_o"), w)),
            b_o: self.b_o.as_ref().map(|b| f(&format!("{name}.b_o"), b)),
        }
    }

    fn collect<'a>(&'a self, name: &str, out: &mut Vec<(String, &'a T)>) {
        out.push((format!("{name}.w_q"), &self.w_q));
        out.push((format!("{name}.b_q"), &self.b_q));
        out.push((format!("{name}.w_k"), &self.w_k));
        out.push((format!("{name}.b_k"), &self.b_k));
        out.push((format!("{name}.w_v"), &self.w_v));
        out.push((format!("{name}.b_v"), &self.b_v));
        if let Some(w) = &self.w_o {
            out.push((format!("{name}.w_o"), w));
        }
        if let Some(b) = &self.b_o {
            out.push((format!("{name}.b_o"), b));
        }
    }

    fn collect_mut<'a>(&'a mut self, name: &str, out: &mut Vec<(String, &'a mut T)>) {
        out.push((format!("{name}.w_q"), &mut self.w_q));
        out.push((format!("{name}.b_q"), &mut self.b_q));
        out.push((format!("{name}.w_k"), &mut self.w_k));
        out.push((format!("{name}.b_k"), &mut self.b_k));
        out.push((format!("{name}.w_v"), &mut self.w_v));
        out.push((format!("{name}.b_v"), &mut self.b_v));
        if let Some(w) = &mut self.w_o {
            out.push((format!("{name}.w_o"), w));
        }
        if let Some(b) = &mut self.b_o {
            out.push((format!("{name}.b_o"), b));
        }
    }
}

impl<T> HeadParams<T> {
    fn map<U>(&self, name: &str, f: &mut impl FnMut(&str, &T) -> U) -> HeadParams<U> {
        HeadParams {
            hidden: self
                .hidden
                .as_ref()
                .map(|(w, b)| (f(&format!("{name}.hidden_w"), w), f(&format!("{name}.hidden_b"), b))),
            w: f(&format!("{name}.w"), &self.w),
            b: f(&format!("{name}.b"), &self.b),
        }
    }

    fn collect<'a>(&'a self, name: &str, out: &mut Vec<(String, &'a T)>) {
        if let Some((w, b)) = &self.hidden {
            out.push((format!("{name}.hidden_w"), w));
            out.push((format!("{name}.hidden_b"), b));
        }
        out.push((format!("{name}.w"), &self.w));
        out.push((format!("{name}.b"), &self.b));
    }

    fn collect_mut<'a>(&'a mut self, name: &str, out: &mut Vec<(String, &'a mut T)>) {
        if let Some((w, b)) = &mut self.hidden {
            out.push((format!("{name}.hidden_w"), w));
            out.push((format!("{name}.hidden_b"), b));
        }
        out.push((format!("{name}.w"), &mut self.w));
        out.push((format!("{name}.b"), &mut self.b));
    }
}

impl<T> FusionParams<T> {
    /// Applies `f` to every entry in canonical order, keeping the structure.
    pub fn map<U>(&self, mut f: impl FnMut(&str, &T) -> U) -> FusionParams<U> {
        FusionParams {
            layers: self
                .layers
                .iter()
                .enumerate()
                .map(|(i, l)| LayerParams {
                    audio: l.audio.map(&format!("layer{i}.audio"), &mut f),
                    text: l.text.map(&format!("layer{i}.text"), &mut f),
                })
                .collect(),
            main_head: self.main_head.map("main_head", &mut f),
            aux_head: self.aux_head.map("aux_head", &mut f),
        }
    }

    /// Named entries in canonical order.
    pub fn entries(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            l.audio.collect(&format!("layer{i}.audio"), &mut out);
            l.text.collect(&format!("layer{i}.text"), &mut out);
        }
        self.main_head.collect("main_head", &mut out);
        self.aux_head.collect("aux_head", &mut out);
        out
    }

    pub fn entries_mut(&mut self) -> Vec<(String, &mut T)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.audio.collect_mut(&format!("layer{i}.audio"), &mut out);
            l.text.collect_mut(&format!("layer{i}.text"), &mut out);
        }
        self.main_head.collect_mut("main_head", &mut out);
        self.aux_head.collect_mut("aux_head", &mut out);
        out
    }
}

impl FusionModelParams {
    /// Glorot-uniform weights and zero biases.
    pub fn init<R: Rng + ?Sized>(cfg: &FusionConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut weight = |fan_in: usize, fan_out: usize| {
            let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            Tensor::new(vec![fan_in, fan_out], data).expect("weight shape")
        };
        Ok(Self::build(cfg, &mut weight))
    }

    /// All-zero parameters.
    pub fn zeros(cfg: &FusionConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self::build(cfg, &mut |i, o| Tensor::zeros(&[i, o])))
    }

    fn build(cfg: &FusionConfig, weight: &mut impl FnMut(usize, usize) -> Tensor) -> Self {
        let c = cfg.feature_dim;
        let bias = |n: usize| Tensor::zeros(&[n]);
        let branch = |weight: &mut dyn FnMut(usize, usize) -> Tensor| BranchParams {
            w_q: weight(c, c),
            b_q: bias(c),
            w_k: weight(c, c),
            b_k: bias(c),
            w_v: weight(c, c),
            b_v: bias(c),
            w_o: cfg.use_output_projection.then(|| weight(c, c)),
            b_o: cfg.use_output_projection.then(|| bias(c)),
        };
        let layers = (0..cfg.attention_layers())
            .map(|_| LayerParams {
                audio: branch(weight),
                text: branch(weight),
            })
            .collect();
        let emb = cfg.embedding_dim();
        let mut head = |out: usize| {
            let (hidden, width) = match cfg.head_hidden {
                0 => (None, emb),
                h => (Some((weight(emb, h), bias(h))), h),
            };
            HeadParams {
                hidden,
                w: weight(width, out),
                b: bias(out),
            }
        };
        let e = cfg.num_emotions;
        let main_head = head(e);
        let aux_head = head(e * e);
        Self {
            layers,
            main_head,
            aux_head,
        }
    }

    /// Registers every tensor as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> FusionParams<Var> {
        self.map(|_, t| tape.leaf(t.clone()))
    }

    pub fn num_scalars(&self) -> usize {
        self.entries().iter().map(|(_, t)| t.numel()).sum()
    }
}

/// Graph handles produced by [`forward`].
#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    /// `(B, 2C)` for two modalities, `(B, C)` for one.
    pub embedding: Var,
    /// `(B, E)`
    pub main_logits: Var,
    /// `(B, E^2)`
    pub aux_logits: Var,
}

/// Multi-head cross-attention from `queries_from` onto `keys_values_from`,
/// plus the residual `queries_from`.
///
/// `kv_mask` is the `B x T_kv` validity mask of `keys_values_from`.
/// `dropout`, when given, drops attention weights at `cfg.dropout_rate`.
pub fn cross_attention_block(
    tape: &mut Tape,
    queries_from: Var,
    keys_values_from: Var,
    params: &BranchParams<Var>,
    kv_mask: &[bool],
    cfg: &FusionConfig,
    dropout: Option<&mut dyn RngCore>,
) -> Result<Var> {
    let qs = tape.shape(queries_from).to_vec();
    let ks = tape.shape(keys_values_from).to_vec();
    let c = cfg.feature_dim;
    if qs.len() != 3 || ks.len() != 3 || qs[2] != c || ks[2] != c || qs[0] != ks[0] {
        return Err(Error::Config(format!(
            "cross-attention inputs {qs:?} and {ks:?} do not match feature_dim {c}"
        )));
    }
    let (b, tq, tk) = (qs[0], qs[1], ks[1]);
    if kv_mask.len() != b * tk {
        return Err(Error::Config(format!(
            "key mask has {} entries, expected {}",
            kv_mask.len(),
            b * tk
        )));
    }
    if kv_mask.chunks(tk).any(|row| !row.iter().any(|&m| m)) {
        return Err(TensorError::FullyMaskedRow.into());
    }
    let h = cfg.num_heads;
    let dh = cfg.head_dim();

    let q = tape.linear(queries_from, params.w_q, params.b_q)?;
    let q = tape.reshape(q, &[b, tq, h, dh])?;
    let q = tape.permute(q, &[0, 2, 1, 3])?; // (B, H, Tq, dh)
    let k = tape.linear(keys_values_from, params.w_k, params.b_k)?;
    let k = tape.reshape(k, &[b, tk, h, dh])?;
    let k_t = tape.permute(k, &[0, 2, 3, 1])?; // (B, H, dh, Tk)
    let v = tape.linear(keys_values_from, params.w_v, params.b_v)?;
    let v = tape.reshape(v, &[b, tk, h, dh])?;
    let v = tape.permute(v, &[0, 2, 1, 3])?; // (B, H, Tk, dh)

    let scores = tape.matmul(q, k_t)?;
    let scores = tape.scale(scores, 1.0 / libm::sqrt(dh as f64));
    let mut mask = vec![0.0; b * h * tq * tk];
    for (i, row) in mask.chunks_mut(tk).enumerate() {
        let sample = i / (h * tq);
        for (j, m) in row.iter_mut().enumerate() {
            if !kv_mask[sample * tk + j] {
                *m = f64::NEG_INFINITY;
            }
        }
    }
    let mask = tape.constant(Tensor::new(vec![b, h, tq, tk], mask)?);
    let scores = tape.add(scores, mask)?;
    let mut weights = tape.softmax_lastdim(scores)?;
    if let Some(rng) = dropout {
        if cfg.dropout_rate > 0.0 {
            let keep = 1.0 - cfg.dropout_rate;
            let n = b * h * tq * tk;
            let drop: Vec<f64> = (0..n)
                .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect();
            let drop = tape.constant(Tensor::new(vec![b, h, tq, tk], drop)?);
            weights = tape.mul(weights, drop)?;
        }
    }
    let ctx = tape.matmul(weights, v)?; // (B, H, Tq, dh)
    let ctx = tape.permute(ctx, &[0, 2, 1, 3])?;
    let mut ctx = tape.reshape(ctx, &[b, tq, c])?;
    if let (Some(w_o), Some(b_o)) = (params.w_o, params.b_o) {
        ctx = tape.linear(ctx, w_o, b_o)?;
    }
    Ok(tape.add(queries_from, ctx)?)
}

/// Mean over valid time steps: `(B, T, C) -> (B, C)`.
fn masked_mean_pool(tape: &mut Tape, x: Var, mask: &[bool]) -> Result<Var> {
    let s = tape.shape(x).to_vec();
    let (b, t, c) = (s[0], s[1], s[2]);
    let mut weights = vec![0.0; b * t];
    for (row, m) in weights.chunks_mut(t).zip(mask.chunks(t)) {
        let count = m.iter().filter(|&&v| v).count();
        if count == 0 {
            return Err(TensorError::FullyMaskedRow.into());
        }
        let inv = 1.0 / count as f64;
        for (w, &valid) in row.iter_mut().zip(m) {
            if valid {
                *w = inv;
            }
        }
    }
    let w = tape.constant(Tensor::new(vec![b, 1, t], weights)?);
    let pooled = tape.matmul(w, x)?;
    Ok(tape.reshape(pooled, &[b, c])?)
}

fn head(tape: &mut Tape, params: &HeadParams<Var>, x: Var) -> Result<Var> {
    let mut x = x;
    if let Some((w, b)) = params.hidden {
        let z = tape.linear(x, w, b)?;
        x = tape.relu(z);
    }
    Ok(tape.linear(x, params.w, params.b)?)
}

/// Runs the network on `batch`.
pub fn forward(
    tape: &mut Tape,
    params: &FusionParams<Var>,
    cfg: &FusionConfig,
    batch: &Batch,
    mut dropout: Option<&mut dyn RngCore>,
) -> Result<ForwardOutput> {
    cfg.validate()?;
    batch.validate()?;
    if batch.feature_dim() != cfg.feature_dim {
        return Err(Error::Config(format!(
            "batch feature dim {} differs from model feature_dim {}",
            batch.feature_dim(),
            cfg.feature_dim
        )));
    }
    if params.layers.len() != cfg.attention_layers() {
        return Err(Error::Config(format!(
            "parameters hold {} layers, config expects {}",
            params.layers.len(),
            cfg.attention_layers()
        )));
    }
    let mut audio = tape.constant(batch.audio.clone());
    let mut text = tape.constant(batch.text.clone());
    for layer in &params.layers {
        let next_audio = cross_attention_block(
            tape,
            audio,
            text,
            &layer.audio,
            &batch.text_mask,
            cfg,
            dropout.as_mut().map(|r| &mut **r as &mut dyn RngCore),
        )?;
        let next_text = cross_attention_block(
            tape,
            text,
            audio,
            &layer.text,
            &batch.audio_mask,
            cfg,
            dropout.as_mut().map(|r| &mut **r as &mut dyn RngCore),
        )?;
        audio = next_audio;
        text = next_text;
    }
    let embedding = match cfg.modality {
        Modality::Audio => masked_mean_pool(tape, audio, &batch.audio_mask)?,
        Modality::Text => masked_mean_pool(tape, text, &batch.text_mask)?,
        Modality::Both => {
            let pa = masked_mean_pool(tape, audio, &batch.audio_mask)?;
            let pt = masked_mean_pool(tape, text, &batch.text_mask)?;
            tape.concat_lastdim(&[pa, pt])?
        }
    };
    let main_logits = head(tape, &params.main_head, embedding)?;
    let aux_logits = head(tape, &params.aux_head, embedding)?;
    Ok(ForwardOutput {
        embedding,
        main_logits,
        aux_logits,
    })
}

/// Row-wise argmax; ties go to the lowest index.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let n = *logits.shape().last().unwrap_or(&1);
    logits
        .data()
        .chunks(n)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Emotion predictions for a batch, without dropout.
pub fn predict(params: &FusionModelParams, cfg: &FusionConfig, batch: &Batch) -> Result<Vec<usize>> {
    let mut tape = Tape::new();
    let bound = params.map(|_, t| tape.constant(t.clone()));
    let out = forward(&mut tape, &bound, cfg, batch, None)?;
    Ok(argmax_rows(tape.value(out.main_logits)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureSequence;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> FusionConfig {
        FusionConfig {
            feature_dim: 8,
            num_heads: 2,
            num_layers: 1,
            num_emotions: 4,
            ..FusionConfig::default()
        }
    }

    fn random_batch(rng: &mut ChaCha8Rng, b: usize, c: usize) -> Batch {
        let seqs: Vec<(FeatureSequence, FeatureSequence)> = (0..b)
            .map(|_| {
                let ta = rng.random_range(1..=4);
                let tt = rng.random_range(1..=4);
                let a = (0..ta * c).map(|_| rng.random_range(-1.0..1.0)).collect();
                let t = (0..tt * c).map(|_| rng.random_range(-1.0..1.0)).collect();
                (
                    FeatureSequence::new(ta, c, a).unwrap(),
                    FeatureSequence::new(tt, c, t).unwrap(),
                )
            })
            .collect();
        let pairs: Vec<_> = seqs.iter().map(|(a, t)| (a, t)).collect();
        Batch::collate(&pairs, (0..b).map(|i| i % 4).collect(), (0..b).collect()).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        assert!(FusionConfig { num_heads: 3, ..cfg() }.validate().is_err());
        assert!(FusionConfig { num_layers: 0, ..cfg() }.validate().is_err());
        assert!(FusionConfig { num_emotions: 1, ..cfg() }.validate().is_err());
        assert!(FusionConfig { dropout_rate: 1.0, ..cfg() }.validate().is_err());
        assert!(FusionConfig {
            modality: Modality::Audio,
            ..cfg()
        }
        .validate()
        .is_err());
        assert_eq!(FusionConfig::default().num_heads, 8);
    }

    #[test]
    fn parameter_count_matches_built_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (k, proj, hidden, fusion) in [
            (1, true, 0, FusionKind::CrossAttention),
            (3, false, 0, FusionKind::CrossAttention),
            (2, true, 5, FusionKind::Concat),
        ] {
            let c = FusionConfig {
                num_layers: k,
                use_output_projection: proj,
                head_hidden: hidden,
                fusion,
                ..cfg()
            };
            let p = FusionModelParams::init(&c, &mut rng).unwrap();
            assert_eq!(p.num_scalars(), c.parameter_count());
        }
    }

    #[test]
    fn output_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = random_batch(&mut rng, 3, 8);
        let params = FusionModelParams::init(&cfg(), &mut rng).unwrap();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let out = forward(&mut tape, &bound, &cfg(), &batch, None).unwrap();
        assert_eq!(tape.shape(out.embedding), &[3, 16]);
        assert_eq!(tape.shape(out.main_logits), &[3, 4]);
        assert_eq!(tape.shape(out.aux_logits), &[3, 16]);
    }

    #[test]
    fn zero_input_zero_heads_predicts_lowest_class() {
        let c = cfg();
        let seq = FeatureSequence::new(2, 8, vec![0.0; 16]).unwrap();
        let batch = Batch::collate(&[(&seq, &seq)], vec![2], vec![0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = FusionModelParams::init(&c, &mut rng).unwrap();
        params.main_head = FusionModelParams::zeros(&c).unwrap().main_head;
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let out = forward(&mut tape, &bound, &c, &batch, None).unwrap();
        assert_eq!(tape.value(out.main_logits).data(), &[0.0; 4]);
        assert_eq!(predict(&params, &c, &batch).unwrap(), vec![0]);
    }

    #[test]
    fn single_key_attends_fully() {
        let c = FusionConfig {
            use_output_projection: false,
            ..cfg()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = FusionModelParams::init(&c, &mut rng).unwrap();
        let q: Vec<f64> = (0..3 * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let kv: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let qv = tape.constant(Tensor::new(vec![1, 3, 8], q.clone()).unwrap());
        let kvv = tape.constant(Tensor::new(vec![1, 1, 8], kv.clone()).unwrap());
        let out =
            cross_attention_block(&mut tape, qv, kvv, &bound.layers[0].audio, &[true], &c, None).unwrap();
        // projected value row: kv W_v + b_v
        let wv = params.layers[0].audio.w_v.data();
        let bv = params.layers[0].audio.b_v.data();
        let vrow: Vec<f64> = (0..8)
            .map(|j| bv[j] + (0..8).map(|i| kv[i] * wv[i * 8 + j]).sum::<f64>())
            .collect();
        let got = tape.value(out).data();
        for t in 0..3 {
            for j in 0..8 {
                assert!((got[t * 8 + j] - (q[t * 8 + j] + vrow[j])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fully_masked_keys_are_rejected() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = FusionModelParams::init(&c, &mut rng).unwrap();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let x = tape.constant(Tensor::zeros(&[1, 2, 8]));
        let err = cross_attention_block(&mut tape, x, x, &bound.layers[0].audio, &[false, false], &c, None);
        assert!(matches!(err, Err(Error::Tensor(TensorError::FullyMaskedRow))));
        let y = tape.constant(Tensor::zeros(&[1, 2, 6]));
        let err = cross_attention_block(&mut tape, x, y, &bound.layers[0].audio, &[true, true], &c, None);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn argmax_ties_go_low() {
        let t = Tensor::new(vec![2, 3], vec![1.0, 3.0, 3.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(argmax_rows(&t), vec![1, 0]);
    }
}
