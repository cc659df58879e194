//! Evaluation orchestration: classification (fixed or auto-tuned beta),
//! retrieval for projection checkpoints, GCCA models and raw pretrained
//! features, and the bias sweep.

use crate::dataio::{Checkpoint, DatasetBundle, Split};
use crate::error::{Error, Result};
use crate::evalkit::{
    classification_report, distance_matrix, embed_split, leave_one_out_map, predict_from_matrix,
    sweep_bias, ClassificationReport, EmbeddedSplit, RetrievalReport, SweepResult, SWEEP_POINTS,
};
use crate::gcca::{transform_gcca, GccaModel};
use crate::inference::{select_modality, ChosenModality, Direction, InferenceConfig, ModalityMode};
use crate::objective::Distance;

/// Beta argument: a fixed value, or tune on the val split and evaluate at
/// the best harmonic-mean point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaArg {
    Auto,
    Fixed(f64),
}

impl std::str::FromStr for BetaArg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(BetaArg::Auto);
        }
        s.parse::<f64>()
            .map(BetaArg::Fixed)
            .map_err(|_| Error::InvalidConfig(format!("--beta expects a number or `auto`, got {s:?}")))
    }
}

pub fn check_dims(ckpt: &Checkpoint, bundle: &DatasetBundle) -> Result<()> {
    if ckpt.dims != bundle.dims {
        return Err(Error::Shape {
            op: "eval",
            expected: format!(
                "dataset dims ({}, {}, {})",
                ckpt.dims.audio, ckpt.dims.video, ckpt.dims.text
            ),
            got: format!(
                "({}, {}, {})",
                bundle.dims.audio, bundle.dims.video, bundle.dims.text
            ),
        });
    }
    Ok(())
}

/// Per-example modality choices for a split. Concrete modes map every
/// example the same way; `select` asks the attention network.
pub fn resolve_modalities(
    ckpt: &Checkpoint,
    bundle: &DatasetBundle,
    es: &EmbeddedSplit,
    cfg: &InferenceConfig,
) -> Result<Vec<ChosenModality>> {
    let uniform = |m: ChosenModality| vec![m; es.example_idx.len()];
    match cfg.modality {
        ModalityMode::Audio => Ok(uniform(ChosenModality::Audio)),
        ModalityMode::Video => Ok(uniform(ChosenModality::Video)),
        ModalityMode::Both => Ok(uniform(ChosenModality::Both)),
        ModalityMode::Select => {
            let attn = ckpt.attention.as_ref().ok_or_else(|| {
                Error::InvalidConfig(
                    "--modality select needs a checkpoint trained with attention".into(),
                )
            })?;
            es.example_idx
                .iter()
                .map(|&i| select_modality(attn, &ckpt.projection, &bundle.examples[i], cfg))
                .collect()
        }
    }
}

pub fn modality_label(mode: ModalityMode) -> &'static str {
    match mode {
        ModalityMode::Audio => "audio",
        ModalityMode::Video => "video",
        ModalityMode::Both => "both",
        ModalityMode::Select => "select",
    }
}

#[derive(Debug)]
pub struct ClassifyOutcome {
    pub report: ClassificationReport,
    /// Val-split sweep behind `--beta auto`, when one ran.
    pub sweep: Option<SweepResult>,
}

/// Classification evaluation on `split`. With `BetaArg::Auto` the beta
/// grid is swept on the val split first and the best-HM point is applied.
pub fn eval_classify(
    ckpt: &Checkpoint,
    bundle: &DatasetBundle,
    split: Split,
    beta: BetaArg,
    cfg: &InferenceConfig,
    threads: usize,
) -> Result<ClassifyOutcome> {
    check_dims(ckpt, bundle)?;
    cfg.validate()?;
    let dist = ckpt.objective.distance;

    let (beta_value, sweep) = match beta {
        BetaArg::Fixed(b) => {
            if b < 0.0 {
                return Err(Error::InvalidConfig("beta must be >= 0".into()));
            }
            (b, None)
        }
        BetaArg::Auto => {
            let val = embed_split(&ckpt.projection, bundle, Split::Val, threads)?;
            let chosen = resolve_modalities(ckpt, bundle, &val, cfg)?;
            let sweep = sweep_bias(&val, &chosen, dist, SWEEP_POINTS, threads)?;
            (sweep.best.beta, Some(sweep))
        }
    };

    let es = embed_split(&ckpt.projection, bundle, split, threads)?;
    let chosen = resolve_modalities(ckpt, bundle, &es, cfg)?;
    let dmat = distance_matrix(&es, &chosen, dist, threads)?;
    let (preds, unseen_preds) = predict_from_matrix(&dmat, &es.class_seen, beta_value);
    let report = classification_report(
        &es,
        &preds,
        unseen_preds,
        beta_value,
        modality_label(cfg.modality),
    )?;
    Ok(ClassifyOutcome {
        report,
        sweep,
    })
}

/// Bias sweep on a split; returns the grid for reporting.
pub fn eval_sweep(
    ckpt: &Checkpoint,
    bundle: &DatasetBundle,
    split: Split,
    cfg: &InferenceConfig,
    threads: usize,
) -> Result<SweepResult> {
    check_dims(ckpt, bundle)?;
    let es = embed_split(&ckpt.projection, bundle, split, threads)?;
    let chosen = resolve_modalities(ckpt, bundle, &es, cfg)?;
    sweep_bias(&es, &chosen, ckpt.objective.distance, SWEEP_POINTS, threads)
}

/// Which embedding source retrieval runs on.
pub enum RetrievalModel<'a> {
    Projection(&'a Checkpoint),
    Gcca(&'a GccaModel),
    /// Raw features compared directly; only valid when the involved
    /// dimensions match.
    Pretrained,
}

fn embedded_from_gcca(
    model: &GccaModel,
    bundle: &DatasetBundle,
    split: Split,
    threads: usize,
) -> Result<EmbeddedSplit> {
    let example_idx = bundle.split_indices(split);
    if example_idx.is_empty() {
        return Err(Error::EmptyInput(format!("split {split} has no examples")));
    }
    let pairs = crate::evalkit::parallel_map(&example_idx, threads, |&i| {
        let e = &bundle.examples[i];
        let a = transform_gcca(model, 0, &e.audio)?;
        let v = transform_gcca(model, 1, &e.video)?;
        Ok::<_, Error>((a, v))
    });
    let mut audio = Vec::new();
    let mut video = Vec::new();
    for p in pairs {
        let (a, v) = p?;
        audio.push(a);
        video.push(v);
    }
    let class_embeddings = bundle
        .classes
        .iter()
        .map(|c| transform_gcca(model, 2, &c.text_embedding))
        .collect::<Result<_>>()?;
    Ok(EmbeddedSplit {
        class_of: example_idx.iter().map(|&i| bundle.examples[i].class_idx).collect(),
        example_idx,
        audio,
        video,
        class_embeddings,
        class_seen: bundle.seen_flags(),
        class_names: bundle.classes.iter().map(|c| c.name.clone()).collect(),
    })
}

fn embedded_from_pretrained(
    bundle: &DatasetBundle,
    split: Split,
    direction: Direction,
) -> Result<EmbeddedSplit> {
    let d = bundle.dims;
    let ok = match direction {
        Direction::T2A => d.text == d.audio,
        Direction::T2V => d.text == d.video,
        Direction::T2AV => d.text == d.audio && d.audio == d.video,
        Direction::A2V | Direction::V2A => d.audio == d.video,
    };
    if !ok {
        return Err(Error::InvalidConfig(format!(
            "pretrained retrieval for {direction} needs matching feature dims (audio {}, video {}, text {})",
            d.audio, d.video, d.text
        )));
    }
    let example_idx = bundle.split_indices(split);
    if example_idx.is_empty() {
        return Err(Error::EmptyInput(format!("split {split} has no examples")));
    }
    Ok(EmbeddedSplit {
        class_of: example_idx.iter().map(|&i| bundle.examples[i].class_idx).collect(),
        audio: example_idx.iter().map(|&i| bundle.examples[i].audio.clone()).collect(),
        video: example_idx.iter().map(|&i| bundle.examples[i].video.clone()).collect(),
        example_idx,
        class_embeddings: bundle.classes.iter().map(|c| c.text_embedding.clone()).collect(),
        class_seen: bundle.seen_flags(),
        class_names: bundle.classes.iter().map(|c| c.name.clone()).collect(),
    })
}

/// Leave-one-out retrieval. No seen-class bias correction applies here:
/// gallery class membership is unknown at query time.
pub fn eval_retrieve(
    model: &RetrievalModel,
    bundle: &DatasetBundle,
    split: Split,
    direction: Direction,
    threads: usize,
) -> Result<RetrievalReport> {
    let (es, dist) = match model {
        RetrievalModel::Projection(ckpt) => {
            check_dims(ckpt, bundle)?;
            (
                embed_split(&ckpt.projection, bundle, split, threads)?,
                ckpt.objective.distance,
            )
        }
        RetrievalModel::Gcca(g) => (
            embedded_from_gcca(g, bundle, split, threads)?,
            Distance::Euclidean,
        ),
        RetrievalModel::Pretrained => (
            embedded_from_pretrained(bundle, split, direction)?,
            Distance::Euclidean,
        ),
    };
    leave_one_out_map(&es, direction, dist, threads)
}
