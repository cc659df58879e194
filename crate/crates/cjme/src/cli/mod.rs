//! Command-line interface: synthetic data generation, training,
//! evaluation, bias sweeps, the GCCA baseline, and gradient checking.
//! Every command is a pure function of its input files, flags and seed.

pub mod eval;
pub mod report;
pub mod train;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::dataio::{
    gen_synthetic, load_checkpoint, load_dataset, save_checkpoint, save_dataset, Split,
    SynthConfig,
};
use crate::error::{Error, Result};
use crate::gcca::{fit_gcca, is_gcca_file, load_gcca, save_gcca};
use crate::inference::{AlphaPolarity, Direction, InferenceConfig, ModalityMode};
use crate::numerics::DenseMatrix;
use crate::objective::Distance;
use crate::projector::{grad_check, AttnInputKind};
use eval::{eval_classify, eval_retrieve, eval_sweep, BetaArg, RetrievalModel};
use report::{format_table, metric_report_tsv, pct, sweep_tsv, write_report, MetricRow};
use train::{epoch_log_header, epoch_log_row, train_model, TrainSettings};

#[derive(Parser)]
#[command(
    name = "cjme",
    version,
    about = "Joint audio-video-text embeddings for generalized zero-shot classification and retrieval"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    GenSynth(GenSynthArgs),
    /// Train projection (and optionally attention) networks.
    Train(TrainArgs),
    /// Evaluate a trained model.
    Eval(EvalArgs),
    /// Sweep the seen-class bias and report S/U/HM per grid point.
    SweepBias(SweepArgs),
    /// Fit the GCCA baseline on a dataset split.
    Gcca(GccaArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenSynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 12)]
    classes: usize,
    #[arg(long, default_value_t = 4)]
    unseen: usize,
    #[arg(long = "per-class", default_value_t = 200)]
    per_class: usize,
    #[arg(long = "audio-dim", default_value_t = 64)]
    audio_dim: usize,
    #[arg(long = "video-dim", default_value_t = 64)]
    video_dim: usize,
    #[arg(long = "text-dim", default_value_t = 32)]
    text_dim: usize,
    #[arg(long = "audio-dominant-fraction", default_value_t = 0.0)]
    audio_dominant_fraction: f64,
    #[arg(long = "noise-scale", default_value_t = 0.05)]
    noise_scale: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "embed-dim", default_value_t = 64)]
    embed_dim: usize,
    #[arg(long, default_value_t = 512)]
    hidden: usize,
    #[arg(long = "attention-hidden", default_value_t = 64)]
    attention_hidden: usize,
    #[arg(long, default_value_t = 1.0)]
    margin: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Entropy threshold for attention labels; defaults to 0.2 ln(seen classes).
    #[arg(long)]
    xi: Option<f64>,
    /// Static video-triplet weight (no-attention mode).
    #[arg(long = "alpha-v", default_value_t = 1.0)]
    alpha_v: f64,
    /// Static audio-triplet weight (no-attention mode).
    #[arg(long = "alpha-a", default_value_t = 1.0)]
    alpha_a: f64,
    #[arg(long, default_value = "euclidean")]
    distance: String,
    /// Train the modality attention network (default).
    #[arg(long, conflicts_with = "no_attention")]
    attention: bool,
    #[arg(long = "no-attention")]
    no_attention: bool,
    /// What the attention network reads: raw features or projected embeddings.
    #[arg(long = "attention-input", default_value = "raw")]
    attention_input: String,
    /// Inference-time flag; invalid together with --no-attention.
    #[arg(long = "attention-threshold")]
    attention_threshold: Option<f64>,
    /// l2-normalize embeddings before distance computations (default).
    #[arg(long, conflicts_with = "no_normalize")]
    normalize: bool,
    /// Compute distances on raw, unnormalized embeddings.
    #[arg(long = "no-normalize")]
    no_normalize: bool,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[command(subcommand)]
    task: EvalTask,
}

#[derive(Subcommand)]
enum EvalTask {
    /// Generalized zero-shot classification (mAcc S/U/HM).
    Classify(ClassifyArgs),
    /// Leave-one-out retrieval (mAP S/U/HM).
    Retrieve(RetrieveArgs),
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    data: PathBuf,
    /// Projection checkpoint.
    #[arg(long)]
    model: PathBuf,
    /// Report output path (tab-separated).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "both")]
    modality: String,
    /// Seen-class penalty: a number, or `auto` to tune on the val split.
    #[arg(long, default_value = "0")]
    beta: String,
    #[arg(long = "attention-threshold", default_value_t = 0.7)]
    attention_threshold: f64,
    #[arg(long = "alpha-polarity", default_value = "literal")]
    alpha_polarity: String,
    /// Split to report on.
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct RetrieveArgs {
    #[arg(long)]
    data: PathBuf,
    /// Projection checkpoint or GCCA model (recognized by magic).
    #[arg(long, required_unless_present = "pretrained")]
    model: Option<PathBuf>,
    /// Rank raw features directly instead of a learned model.
    #[arg(long)]
    pretrained: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    direction: String,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "both")]
    modality: String,
    #[arg(long = "attention-threshold", default_value_t = 0.7)]
    attention_threshold: f64,
    #[arg(long = "alpha-polarity", default_value = "literal")]
    alpha_polarity: String,
    #[arg(long, default_value = "val")]
    split: String,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct GccaArgs {
    #[arg(long)]
    data: PathBuf,
    /// GCCA model output path.
    #[arg(long)]
    out: PathBuf,
    /// Shared-space dimension; defaults to min(view dims, 32).
    #[arg(long)]
    k: Option<usize>,
    /// Absolute regularizer; defaults to 1e-3 of the mean covariance diagonal.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long, default_value = "train")]
    split: String,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of random instances (seed, seed+1, ...).
    #[arg(long, default_value_t = 10)]
    trials: usize,
}

/// Parses arguments, runs the command, and maps errors to exit codes:
/// 0 success, 2 configuration/validation, 3 numeric failure, 1 otherwise.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenSynth(a) => cmd_gen_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => match a.task {
            EvalTask::Classify(c) => cmd_classify(c),
            EvalTask::Retrieve(r) => cmd_retrieve(r),
        },
        Command::SweepBias(a) => cmd_sweep(a),
        Command::Gcca(a) => cmd_gcca(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}

fn cmd_gen_synth(a: GenSynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        num_classes: a.classes,
        num_unseen: a.unseen,
        per_class: a.per_class,
        audio_dim: a.audio_dim,
        video_dim: a.video_dim,
        text_dim: a.text_dim,
        audio_dominant_fraction: a.audio_dominant_fraction,
        noise_scale: a.noise_scale,
        seed: a.seed,
    };
    let bundle = gen_synthetic(&cfg)?;
    save_dataset(&bundle, &a.out)?;
    println!(
        "wrote {} examples over {} classes ({} unseen) to {}",
        bundle.examples.len(),
        bundle.classes.len(),
        a.unseen,
        a.out.display()
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let attention = !a.no_attention;
    if a.no_attention && a.attention_threshold.is_some() {
        return Err(Error::InvalidConfig(
            "--attention-threshold has no meaning with --no-attention".into(),
        ));
    }
    let bundle = load_dataset(&a.data)?;
    let n_seen = bundle.seen_class_indices().len();
    let mut objective = crate::objective::ObjectiveConfig::defaults_for(n_seen);
    objective.margin = a.margin;
    objective.lambda = a.lambda;
    objective.gamma = a.gamma;
    objective.alpha_v = a.alpha_v;
    objective.alpha_a = a.alpha_a;
    if let Some(xi) = a.xi {
        objective.xi = xi;
    }
    objective.distance = a.distance.parse::<Distance>()?;
    let settings = TrainSettings {
        epochs: a.epochs,
        batch: a.batch,
        seed: a.seed,
        lr: a.lr,
        embed_dim: a.embed_dim,
        hidden: a.hidden,
        attention,
        attention_hidden: a.attention_hidden,
        attention_input: match a.attention_input.as_str() {
            "raw" => AttnInputKind::Raw,
            "projected" => AttnInputKind::Projected,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown attention input {other:?} (expected raw or projected)"
                )))
            }
        },
        normalize: !a.no_normalize,
        objective,
    };
    let outcome = train_model(&bundle, &settings)?;
    println!("{}", epoch_log_header());
    for e in &outcome.log {
        println!("{}", epoch_log_row(e));
    }
    save_checkpoint(&outcome.checkpoint, &a.out)?;
    println!("checkpoint written to {}", a.out.display());
    Ok(())
}

fn parse_split(s: &str) -> Result<Split> {
    s.parse()
}

fn infer_cfg(modality: &str, threshold: f64, polarity: &str) -> Result<InferenceConfig> {
    let cfg = InferenceConfig {
        beta: 0.0,
        attention_threshold: threshold,
        modality: modality.parse::<ModalityMode>()?,
        alpha_polarity: polarity.parse::<AlphaPolarity>()?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_classify(a: ClassifyArgs) -> Result<()> {
    let bundle = load_dataset(&a.data)?;
    let ckpt = load_checkpoint(&a.model)?;
    let cfg = infer_cfg(&a.modality, a.attention_threshold, &a.alpha_polarity)?;
    let beta: BetaArg = a.beta.parse()?;
    let split = parse_split(&a.split)?;
    let outcome = eval_classify(&ckpt, &bundle, split, beta, &cfg, a.threads)?;
    let r = &outcome.report;

    let rows = vec![MetricRow {
        metric: "mAcc".into(),
        direction: r.modality_label.clone(),
        s: r.s,
        u: r.u,
        hm: r.hm,
    }];
    let tsv = metric_report_tsv(&rows);
    if let Some(path) = &a.out {
        write_report(path, &tsv)?;
    }
    if let Some(sweep) = &outcome.sweep {
        println!("val sweep picked beta {:.6} (HM {})", sweep.best.beta, pct(sweep.best.hm));
    }
    println!(
        "{}",
        format_table(
            &["metric", "direction", "S", "U", "HM", "beta"],
            &[vec![
                "mAcc".into(),
                r.modality_label.clone(),
                pct(r.s),
                pct(r.u),
                pct(r.hm),
                format!("{:.6}", r.beta),
            ]],
        )
    );
    let per_class: Vec<Vec<String>> = r
        .per_class
        .iter()
        .map(|(name, acc)| vec![name.clone(), pct(*acc)])
        .collect();
    println!("{}", format_table(&["class", "acc"], &per_class));
    println!(
        "unseen-predictions\t{}/{}",
        r.unseen_pred_count, r.num_examples
    );
    Ok(())
}

fn cmd_retrieve(a: RetrieveArgs) -> Result<()> {
    let bundle = load_dataset(&a.data)?;
    let direction: Direction = a.direction.parse()?;
    let split = parse_split(&a.split)?;

    let gcca_model;
    let ckpt;
    let model = if a.pretrained {
        RetrievalModel::Pretrained
    } else {
        let path = a.model.as_ref().expect("clap enforces model or pretrained");
        if is_gcca_file(path)? {
            gcca_model = load_gcca(path)?;
            RetrievalModel::Gcca(&gcca_model)
        } else {
            ckpt = load_checkpoint(path)?;
            RetrievalModel::Projection(&ckpt)
        }
    };

    let r = eval_retrieve(&model, &bundle, split, direction, a.threads)?;
    let rows = vec![MetricRow {
        metric: "mAP".into(),
        direction: direction.to_string(),
        s: r.s,
        u: r.u,
        hm: r.hm,
    }];
    let tsv = metric_report_tsv(&rows);
    if let Some(path) = &a.out {
        write_report(path, &tsv)?;
    }
    println!(
        "{}",
        format_table(
            &["metric", "direction", "S", "U", "HM"],
            &[vec![
                "mAP".into(),
                direction.to_string(),
                pct(r.s),
                pct(r.u),
                pct(r.hm),
            ]],
        )
    );
    let per_class: Vec<Vec<String>> = r
        .per_class
        .iter()
        .map(|(name, ap)| vec![name.clone(), pct(*ap)])
        .collect();
    println!("{}", format_table(&["class", "mAP"], &per_class));
    for name in &r.skipped {
        eprintln!("warning: class {name:?} skipped (no other gallery member)");
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let bundle = load_dataset(&a.data)?;
    let ckpt = load_checkpoint(&a.model)?;
    let cfg = infer_cfg(&a.modality, a.attention_threshold, &a.alpha_polarity)?;
    let split = parse_split(&a.split)?;
    let sweep = eval_sweep(&ckpt, &bundle, split, &cfg, a.threads)?;
    let tsv = sweep_tsv(&sweep.points);
    if let Some(path) = &a.out {
        write_report(path, &tsv)?;
    }
    print!("{tsv}");
    println!("best\t{:.6}\t{}", sweep.best.beta, pct(sweep.best.hm));
    Ok(())
}

fn cmd_gcca(a: GccaArgs) -> Result<()> {
    let bundle = load_dataset(&a.data)?;
    let split = parse_split(&a.split)?;
    let idx = bundle.split_indices(split);
    if idx.is_empty() {
        return Err(Error::EmptyInput(format!("split {split} has no examples")));
    }
    let n = idx.len();
    let d = bundle.dims;
    let audio = DenseMatrix::from_fn(n, d.audio, |i, j| bundle.examples[idx[i]].audio[j]);
    let video = DenseMatrix::from_fn(n, d.video, |i, j| bundle.examples[idx[i]].video[j]);
    let text = DenseMatrix::from_fn(n, d.text, |i, j| {
        bundle.classes[bundle.examples[idx[i]].class_idx].text_embedding[j]
    });
    let views = [audio, video, text];

    let k = a.k.unwrap_or_else(|| d.audio.min(d.video).min(d.text).min(32));
    let r = match a.r {
        Some(r) => r,
        None => {
            // 1e-3 of the mean covariance diagonal across views.
            let mut diag_sum = 0.0;
            let mut count = 0usize;
            for v in &views {
                let (rows, cols) = (v.rows(), v.cols());
                let mut mean = vec![0.0; cols];
                for i in 0..rows {
                    for (j, m) in mean.iter_mut().enumerate() {
                        *m += v.get(i, j);
                    }
                }
                for m in mean.iter_mut() {
                    *m /= rows as f64;
                }
                for j in 0..cols {
                    let mut s = 0.0;
                    for i in 0..rows {
                        let x = v.get(i, j) - mean[j];
                        s += x * x;
                    }
                    diag_sum += s;
                    count += 1;
                }
            }
            1e-3 * diag_sum / count as f64
        }
    };

    let model = fit_gcca(&views, k, r)?;
    save_gcca(&model, &a.out)?;
    println!("component\tcorrelation");
    for (i, c) in model.correlations.iter().enumerate() {
        println!("{i}\t{c:.6}");
    }
    println!("gcca model written to {} (k={k}, r={r:.6e})", a.out.display());
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<()> {
    if a.trials == 0 {
        return Err(Error::InvalidConfig("--trials must be >= 1".into()));
    }
    println!("seed\tnetwork\tmax_rel_err");
    let mut overall = 0.0f64;
    for t in 0..a.trials {
        let seed = a.seed + t as u64;
        let report = grad_check(seed)?;
        for (name, err) in &report.per_network {
            println!("{seed}\t{name}\t{err:.3e}");
        }
        overall = overall.max(report.max_rel_err);
    }
    println!("overall\tmax\t{overall:.3e}");
    println!(
        "verdict\t{}",
        if overall < 1e-5 { "PASS" } else { "FAIL" }
    );
    Ok(())
}
