//! The `mermix` command line.
//!
//! Exit codes: 0 success, 1 failed check or runtime error, 2 usage error.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use mermix_core::gradcheck::{check_fusion_gradients, GradcheckOptions};
use mermix_core::train::{evaluate, train};
use mermix_core::{
    synth_generate, unweighted_accuracy, weighted_accuracy, Dataset, Fault, FusionConfig, FusionKind, Modality,
    SynthConfig, SynthMode, TrainConfig,
};

use crate::config::{self, Pairs};
use crate::error::io;
use crate::manifest::{load_dataset, save_dataset, SynthInfo};
use crate::report::{confusion_table, cv_records, cv_table, training_log};
use crate::{checkpoint, mef, parallel};

#[derive(Debug, Parser)]
#[command(name = "mermix", version, about = "Cross-attention fusion of audio and text embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic MEF1 dataset.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint.
    Train(TrainCmd),
    /// Score a checkpoint on a dataset.
    Eval(EvalCmd),
    /// Leave-one-session-out cross-validation.
    Cv(CvCmd),
    /// Finite-difference check of every parameter gradient.
    Gradcheck(GradcheckCmd),
    /// Print MEF1 headers.
    Inspect(InspectCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FusionArg {
    Fc,
    Ca,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModalityArg {
    Audio,
    Text,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Additive,
    Xor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BreakGrad {
    Matmul,
    Softmax,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Additive)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 4)]
    pub emotions: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 3)]
    pub min_frames: usize,
    #[arg(long, default_value_t = 8)]
    pub max_frames: usize,
    /// Audio informativeness in [0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub sa: f64,
    /// Text informativeness in [0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub st: f64,
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    /// Utterances per class in each of the five sessions.
    #[arg(long, default_value_t = 10)]
    pub per_class: usize,
    #[arg(long, default_value_t = 1.0)]
    pub signal_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Defaults to `ca` with both modalities and `fc` with one.
    #[arg(long, value_enum)]
    pub fusion: Option<FusionArg>,
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[arg(long, default_value_t = 8)]
    pub heads: usize,
    #[arg(long, value_enum, default_value_t = ModalityArg::Both)]
    pub modality: ModalityArg,
    #[arg(long, action = ArgAction::Set, default_value_t = true)]
    pub use_output_projection: bool,
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    /// Width of a ReLU hidden layer in each head; 0 keeps heads affine.
    #[arg(long, default_value_t = 0)]
    pub head_hidden: usize,
    /// Class count; defaults to the dataset manifest or the labels present.
    #[arg(long)]
    pub emotions: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.01)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_main: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_aux1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_aux2: f64,
    /// Enable the recombination task.
    #[arg(long)]
    pub aux1: bool,
    /// Enable the same-emotion replacement task.
    #[arg(long)]
    pub aux2: bool,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainCmd {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Step log path (tab-separated).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Leave this session out of training.
    #[arg(long)]
    pub exclude_session: Option<u8>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Args)]
pub struct EvalCmd {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Score only this session.
    #[arg(long)]
    pub session: Option<u8>,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
}

#[derive(Debug, Args)]
pub struct CvCmd {
    #[arg(long)]
    pub data: PathBuf,
    /// Directory for `cv_report.txt` and `cv_report.tsv`.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Args)]
pub struct GradcheckCmd {
    #[arg(long, action = ArgAction::Set, default_value_t = true)]
    pub use_output_projection: bool,
    /// Sabotage one backward rule to confirm the check notices.
    #[arg(long, value_enum, num_args = 0..=1, default_missing_value = "matmul")]
    pub break_grad: Option<BreakGrad>,
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 4)]
    pub emotions: usize,
    #[arg(long, default_value_t = 3)]
    pub batch: usize,
    #[arg(long, default_value_t = 4)]
    pub max_frames: usize,
    #[arg(long, default_value_t = 0)]
    pub head_hidden: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct InspectCmd {
    pub path: PathBuf,
    /// Print totals only, not one line per record.
    #[arg(long)]
    pub summary: bool,
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Check(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Check(_) | Failure::Runtime(_) => 1,
        }
    }
}

impl From<crate::Error> for Failure {
    fn from(e: crate::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<mermix_core::Error> for Failure {
    fn from(e: mermix_core::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Out<'a> = &'a mut dyn Write;
type CmdResult = Result<(), Failure>;

fn say(out: Out<'_>, text: &str) -> CmdResult {
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::Runtime(format!("stdout: {e}")))
}

fn echo(out: Out<'_>, pairs: &Pairs) -> CmdResult {
    say(out, &config::render(pairs))?;
    say(out, "\n")
}

fn path_pair(pairs: &mut Pairs, key: &str, p: &std::path::Path) {
    pairs.push((key.into(), p.display().to_string()));
}

impl ModelArgs {
    fn resolve(&self, aux: bool, dataset: &Dataset) -> Result<FusionConfig, Failure> {
        let modality = match self.modality {
            ModalityArg::Audio => Modality::Audio,
            ModalityArg::Text => Modality::Text,
            ModalityArg::Both => Modality::Both,
        };
        let fusion = match (self.fusion, modality) {
            (Some(FusionArg::Ca), Modality::Both) | (None, Modality::Both) => FusionKind::CrossAttention,
            (Some(FusionArg::Ca), _) => {
                return Err(Failure::Usage("--fusion ca needs --modality both".into()));
            }
            (Some(FusionArg::Fc), _) | (None, _) => FusionKind::Concat,
        };
        if aux && modality != Modality::Both {
            return Err(Failure::Usage("--aux1/--aux2 need --modality both".into()));
        }
        let cfg = FusionConfig {
            feature_dim: dataset.feature_dim().unwrap_or(0),
            num_heads: self.heads,
            num_layers: self.layers,
            num_emotions: dataset.num_emotions,
            use_output_projection: self.use_output_projection,
            dropout_rate: self.dropout,
            fusion,
            modality,
            head_hidden: self.head_hidden,
        };
        cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

impl OptimArgs {
    fn resolve(&self) -> Result<TrainConfig, Failure> {
        let cfg = TrainConfig {
            learning_rate: self.lr,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            batch_size: self.batch_size,
            epochs: self.epochs,
            lambda_main: self.lambda_main,
            lambda_aux1: self.lambda_aux1,
            lambda_aux2: self.lambda_aux2,
            enable_aux1: self.aux1,
            enable_aux2: self.aux2,
            grad_clip_norm: self.grad_clip,
            seed: self.seed,
        };
        cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

fn load(path: &std::path::Path, emotions: Option<usize>) -> Result<Dataset, Failure> {
    if path.as_os_str().is_empty() {
        return Err(Failure::Usage("empty --data path".into()));
    }
    Ok(load_dataset(path, emotions)?)
}

pub fn synth(a: &SynthArgs, out: Out<'_>) -> CmdResult {
    let cfg = SynthConfig {
        num_emotions: a.emotions,
        feature_dim: a.dim,
        min_frames: a.min_frames,
        max_frames: a.max_frames,
        audio_signal: a.sa,
        text_signal: a.st,
        noise: a.noise,
        per_class_per_session: a.per_class,
        mode: match a.mode {
            ModeArg::Additive => SynthMode::Additive,
            ModeArg::Xor => SynthMode::Xor,
        },
        signal_fraction: a.signal_fraction,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let mut pairs = config::synth_pairs(&cfg, a.seed);
    path_pair(&mut pairs, "out", &a.out);
    echo(out, &pairs)?;
    let ds = synth_generate(&cfg, a.seed)?;
    let manifest = save_dataset(&ds, &a.out, Some(SynthInfo::new(&cfg, a.seed)))?;
    say(out, &format!("wrote {} utterances to {}\n", ds.len(), a.out.display()))?;
    for (name, n) in ds.class_names.iter().zip(ds.meta().class_counts) {
        say(out, &format!("  {name}: {n}\n"))?;
    }
    say(out, &format!("crc32={}\n", manifest.crc32))
}

pub fn train_cmd(a: &TrainCmd, out: Out<'_>) -> CmdResult {
    let ds = load(&a.data, a.model.emotions)?;
    let tcfg = a.optim.resolve()?;
    let model = a.model.resolve(tcfg.enable_aux1 || tcfg.enable_aux2, &ds)?;
    let indices: Vec<usize> = match a.exclude_session {
        Some(s) => (0..ds.len()).filter(|&i| ds.samples[i].session != s).collect(),
        None => (0..ds.len()).collect(),
    };
    let mut pairs = vec![("command".to_string(), "train".to_string())];
    path_pair(&mut pairs, "data", &a.data);
    path_pair(&mut pairs, "out", &a.out);
    pairs.push((
        "exclude_session".into(),
        a.exclude_session.map_or("none".into(), |s| s.to_string()),
    ));
    pairs.extend(config::model_pairs(&model));
    pairs.extend(config::train_pairs(&tcfg));
    echo(out, &pairs)?;
    let outcome = train(&ds, &indices, &model, &tcfg)?;
    checkpoint::save(&a.out, &model, &outcome.params, Some(&tcfg))?;
    if let Some(log) = &a.log {
        fs::write(log, training_log(&outcome.steps)).map_err(io(log))?;
    }
    for e in &outcome.epochs {
        say(
            out,
            &format!(
                "epoch {:>3}  l_main {:.4}  l_aux1 {:.4}  l_aux2 {:.4}  train_acc {:.4}\n",
                e.epoch, e.main, e.aux1, e.aux2, e.train_accuracy
            ),
        )?;
    }
    say(out, &format!("wrote checkpoint {}\n", a.out.display()))
}

pub fn eval_cmd(a: &EvalCmd, out: Out<'_>) -> CmdResult {
    let ck = checkpoint::load(&a.checkpoint)?;
    let ds = load(&a.data, Some(ck.model.num_emotions))?;
    if ds.feature_dim() != Some(ck.model.feature_dim) {
        return Err(Failure::Usage(format!(
            "checkpoint expects feature dim {}, data has {:?}",
            ck.model.feature_dim,
            ds.feature_dim()
        )));
    }
    let indices: Vec<usize> = match a.session {
        Some(s) => ds.session_indices(s),
        None => (0..ds.len()).collect(),
    };
    if indices.is_empty() {
        return Err(Failure::Usage("no utterances selected".into()));
    }
    let mut pairs = vec![("command".to_string(), "eval".to_string())];
    path_pair(&mut pairs, "data", &a.data);
    path_pair(&mut pairs, "checkpoint", &a.checkpoint);
    pairs.push(("session".into(), a.session.map_or("all".into(), |s| s.to_string())));
    pairs.push(("batch_size".into(), a.batch_size.to_string()));
    pairs.extend(config::model_pairs(&ck.model));
    echo(out, &pairs)?;
    let cm = evaluate(&ck.params, &ck.model, &ds, &indices, a.batch_size)?;
    say(out, &confusion_table(&cm, &ds.class_names))?;
    say(
        out,
        &format!(
            "n={}\nWA={:.6}\nUA={:.6}\n",
            cm.total(),
            weighted_accuracy(&cm)?,
            unweighted_accuracy(&cm)?
        ),
    )
}

pub fn cv_cmd(a: &CvCmd, out: Out<'_>) -> CmdResult {
    let ds = load(&a.data, a.model.emotions)?;
    let tcfg = a.optim.resolve()?;
    let model = a.model.resolve(tcfg.enable_aux1 || tcfg.enable_aux2, &ds)?;
    let threads = parallel::thread_limit();
    let mut pairs = vec![("command".to_string(), "cv".to_string())];
    path_pair(&mut pairs, "data", &a.data);
    path_pair(&mut pairs, "out_dir", &a.out_dir);
    pairs.extend(config::model_pairs(&model));
    pairs.extend(config::train_pairs(&tcfg));
    echo(out, &pairs)?;
    let report = parallel::run_cv(&ds, &model, &tcfg, threads)?;
    fs::create_dir_all(&a.out_dir).map_err(io(&a.out_dir))?;
    let table = cv_table(&report, &ds.class_names);
    for (name, text) in [("cv_report.txt", &table), ("cv_report.tsv", &cv_records(&report))] {
        let p = a.out_dir.join(name);
        fs::write(&p, text).map_err(io(&p))?;
    }
    say(out, &table)
}

pub fn gradcheck_cmd(a: &GradcheckCmd, out: Out<'_>) -> CmdResult {
    let model = FusionConfig {
        feature_dim: a.dim,
        num_heads: a.heads,
        num_layers: a.layers,
        num_emotions: a.emotions,
        use_output_projection: a.use_output_projection,
        head_hidden: a.head_hidden,
        ..FusionConfig::default()
    };
    model.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    if a.batch == 0 || a.max_frames == 0 {
        return Err(Failure::Usage("--batch and --max-frames must be >= 1".into()));
    }
    let fault = a.break_grad.map(|b| match b {
        BreakGrad::Matmul => Fault::MatmulRhsGrad,
        BreakGrad::Softmax => Fault::SoftmaxGrad,
    });
    let opts = GradcheckOptions {
        tolerance: a.tolerance,
        batch_size: a.batch,
        max_frames: a.max_frames,
        seed: a.seed,
        fault,
        ..GradcheckOptions::default()
    };
    let mut pairs = vec![("command".to_string(), "gradcheck".to_string())];
    pairs.extend(config::model_pairs(&model));
    for (k, v) in [
        ("gradcheck.seed", a.seed.to_string()),
        ("gradcheck.step", opts.step.to_string()),
        ("gradcheck.tolerance", opts.tolerance.to_string()),
        ("gradcheck.floor", opts.floor.to_string()),
        ("gradcheck.batch", opts.batch_size.to_string()),
        ("gradcheck.max_frames", opts.max_frames.to_string()),
        (
            "gradcheck.break_grad",
            a.break_grad.map_or("none".into(), |b| format!("{b:?}").to_lowercase()),
        ),
    ] {
        pairs.push((k.into(), v));
    }
    echo(out, &pairs)?;
    let report = check_fusion_gradients(&model, &opts)?;
    for g in &report.groups {
        say(out, &format!("{:<28} {:>6}  {:.3e}\n", g.name, g.scalars, g.max_relative_error))?;
    }
    say(out, &format!("max relative error {:.3e}\n", report.max_relative_error))?;
    if report.passed() {
        say(out, "PASS\n")
    } else {
        say(out, "FAIL\n")?;
        Err(Failure::Check(format!(
            "max relative error {:.3e} >= {:.1e}",
            report.max_relative_error, report.tolerance
        )))
    }
}

pub fn inspect_cmd(a: &InspectCmd, out: Out<'_>) -> CmdResult {
    let bytes = fs::read(&a.path).map_err(io(&a.path))?;
    let format = |source| crate::Error::Format {
        path: a.path.clone(),
        source,
    };
    let count = mef::decode_header(&bytes).map_err(format)?;
    say(out, &format!("path={}\nmagic=MEF1\nendianness=little\nrecords={count}\nbytes={}\n", a.path.display(), bytes.len()))?;
    let records = mef::decode(&bytes).map_err(format)?;
    if !a.summary {
        say(out, "index\tutterance_id\tsession\temotion\tmodality\tT\tC\n")?;
        for (i, r) in records.iter().enumerate() {
            say(
                out,
                &format!(
                    "{i}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                    r.utterance_id, r.session, r.emotion, r.modality as u8, r.frames, r.dim
                ),
            )?;
        }
    }
    let mut dims: Vec<u32> = records.iter().map(|r| r.dim).collect();
    dims.sort_unstable();
    dims.dedup();
    say(out, &format!("feature_dims={dims:?}\n"))?;
    let ds = mef::records_to_dataset(&records, None).map_err(format)?;
    let meta = ds.meta();
    say(out, &format!("utterances={}\n", ds.len()))?;
    for (c, n) in meta.class_counts.iter().enumerate() {
        say(out, &format!("class {c} ({}): {n}\n", meta.class_names[c]))?;
    }
    for s in meta.sessions {
        say(out, &format!("session {s}: {}\n", ds.session_indices(s).len()))?;
    }
    Ok(())
}

pub fn dispatch(cli: &Cli, out: Out<'_>) -> CmdResult {
    match &cli.command {
        Command::Synth(a) => synth(a, out),
        Command::Train(a) => train_cmd(a, out),
        Command::Eval(a) => eval_cmd(a, out),
        Command::Cv(a) => cv_cmd(a, out),
        Command::Gradcheck(a) => gradcheck_cmd(a, out),
        Command::Inspect(a) => inspect_cmd(a, out),
    }
}

/// Parses `args`, runs the command, and maps the outcome to an exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match dispatch(&cli, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let _ = lock.flush();
            let (kind, msg) = match &f {
                Failure::Usage(m) => ("usage error", m),
                Failure::Check(m) => ("check failed", m),
                Failure::Runtime(m) => ("error", m),
            };
            eprintln!("mermix: {kind}: {msg}");
            ExitCode::from(f.exit_code())
        }
    }
}
