//! Nearest-class classification with calibrated stacking,
//! modality-selective prediction, and gallery ranking for retrieval.

use crate::dataio::ExampleRecord;
use crate::error::{Error, Result};
use crate::objective::Distance;
use crate::projector::{AttentionModel, AttnInputKind, ProjectionModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModalityMode {
    Audio,
    Video,
    Both,
    /// Pick audio or video per example from the attention output.
    Select,
}

impl std::str::FromStr for ModalityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "audio" => Ok(ModalityMode::Audio),
            "video" => Ok(ModalityMode::Video),
            "both" => Ok(ModalityMode::Both),
            "select" => Ok(ModalityMode::Select),
            other => Err(Error::InvalidConfig(format!(
                "unknown modality {other:?} (expected audio, video, both or select)"
            ))),
        }
    }
}

/// How the attention scalar maps to a modality. `Literal` keeps the
/// labeling rule exactly as written (alpha near 1 selects video);
/// `Inverted` swaps the two single-modality outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaPolarity {
    Literal,
    Inverted,
}

impl std::str::FromStr for AlphaPolarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(AlphaPolarity::Literal),
            "inverted" => Ok(AlphaPolarity::Inverted),
            other => Err(Error::InvalidConfig(format!(
                "unknown alpha polarity {other:?} (expected literal or inverted)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceConfig {
    /// Additive penalty on seen-class scores.
    pub beta: f64,
    /// Threshold on max(alpha, 1-alpha) for single-modality decisions.
    pub attention_threshold: f64,
    pub modality: ModalityMode,
    pub alpha_polarity: AlphaPolarity,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            beta: 0.0,
            attention_threshold: 0.7,
            modality: ModalityMode::Both,
            alpha_polarity: AlphaPolarity::Literal,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta < 0.0 {
            return Err(Error::InvalidConfig("beta must be >= 0".into()));
        }
        if !(self.attention_threshold > 0.5 && self.attention_threshold <= 1.0) {
            return Err(Error::InvalidConfig(
                "attention threshold must lie in (0.5, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Projects both modalities of an example into the embedding space.
pub fn embed_example(model: &ProjectionModel, rec: &ExampleRecord) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((model.embed_audio(&rec.audio)?, model.embed_video(&rec.video)?))
}

/// Per-class penalized scores and the argmin prediction.
#[derive(Debug, Clone)]
pub struct ClassScores {
    /// Distance plus the seen penalty, per class.
    pub scores: Vec<f64>,
    pub seen: Vec<bool>,
    pub predicted: usize,
}

/// Which single modality (or both) feeds the distance computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChosenModality {
    Audio,
    Video,
    Both,
}

/// Unpenalized class distances for one example under a chosen modality;
/// `Both` sums the two distances.
pub fn class_distances(
    audio_emb: &[f64],
    video_emb: &[f64],
    class_embeddings: &[Vec<f64>],
    dist: Distance,
    chosen: ChosenModality,
) -> Result<Vec<f64>> {
    if class_embeddings.is_empty() {
        return Err(Error::EmptyInput("class embedding set".into()));
    }
    Ok(class_embeddings
        .iter()
        .map(|t| match chosen {
            ChosenModality::Audio => dist.eval(audio_emb, t),
            ChosenModality::Video => dist.eval(video_emb, t),
            ChosenModality::Both => dist.eval(audio_emb, t) + dist.eval(video_emb, t),
        })
        .collect())
}

/// Argmin over `distance + beta * [class is seen]`, ties broken by the
/// lowest class index.
pub fn classify_from_distances(dists: &[f64], seen: &[bool], beta: f64) -> ClassScores {
    let scores: Vec<f64> = dists
        .iter()
        .zip(seen)
        .map(|(d, &s)| d + if s { beta } else { 0.0 })
        .collect();
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s < scores[best] {
            best = i;
        }
    }
    ClassScores {
        scores,
        seen: seen.to_vec(),
        predicted: best,
    }
}

/// Generalized zero-shot classification over all classes. `cfg.modality`
/// must be a concrete mode (audio, video or both); `Select` is resolved
/// per example with [`select_modality`] before calling this.
pub fn gzsl_classify(
    audio_emb: &[f64],
    video_emb: &[f64],
    class_embeddings: &[Vec<f64>],
    seen: &[bool],
    dist: Distance,
    cfg: &InferenceConfig,
) -> Result<ClassScores> {
    cfg.validate()?;
    if class_embeddings.len() < 2 {
        return Err(Error::EmptyInput(
            "gzsl_classify needs at least two classes".into(),
        ));
    }
    let chosen = match cfg.modality {
        ModalityMode::Audio => ChosenModality::Audio,
        ModalityMode::Video => ChosenModality::Video,
        ModalityMode::Both => ChosenModality::Both,
        ModalityMode::Select => {
            return Err(Error::InvalidConfig(
                "gzsl_classify takes audio, video or both; resolve select upstream".into(),
            ))
        }
    };
    let dists = class_distances(audio_emb, video_emb, class_embeddings, dist, chosen)?;
    Ok(classify_from_distances(&dists, seen, cfg.beta))
}

/// Resolves the attention output into a modality choice. With literal
/// polarity, alpha at or above the threshold selects video (alpha is the
/// video weight) and 1-alpha at or above it selects audio; inverted
/// polarity swaps those two outcomes. Anything below threshold keeps both.
pub fn select_modality(
    attn: &AttentionModel,
    model: &ProjectionModel,
    rec: &ExampleRecord,
    cfg: &InferenceConfig,
) -> Result<ChosenModality> {
    cfg.validate()?;
    let alpha = match attn.input_kind {
        AttnInputKind::Raw => attn.alpha(&rec.audio, &rec.video)?,
        AttnInputKind::Projected => {
            let (a, v) = embed_example(model, rec)?;
            attn.alpha(&a, &v)?
        }
    };
    let tau = cfg.attention_threshold;
    let high = alpha >= tau;
    let low = 1.0 - alpha >= tau;
    Ok(match (high, low, cfg.alpha_polarity) {
        (true, _, AlphaPolarity::Literal) => ChosenModality::Video,
        (_, true, AlphaPolarity::Literal) => ChosenModality::Audio,
        (true, _, AlphaPolarity::Inverted) => ChosenModality::Audio,
        (_, true, AlphaPolarity::Inverted) => ChosenModality::Video,
        _ => ChosenModality::Both,
    })
}

/// Gallery side of a ranking query: single embeddings, or audio/video
/// pairs scored by the mean of the two distances.
#[derive(Debug, Clone, Copy)]
pub enum Gallery<'a> {
    Single(&'a [Vec<f64>]),
    Pairs(&'a [Vec<f64>], &'a [Vec<f64>]),
}

impl Gallery<'_> {
    pub fn len(&self) -> usize {
        match self {
            Gallery::Single(g) => g.len(),
            Gallery::Pairs(a, _) => a.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ranks the gallery by ascending distance from the query; equal scores
/// keep gallery order (stable ties by index).
pub fn rank_gallery(query: &[f64], gallery: &Gallery, dist: Distance) -> Result<Vec<(usize, f64)>> {
    if gallery.is_empty() {
        return Err(Error::EmptyInput("gallery".into()));
    }
    let scores: Vec<f64> = match gallery {
        Gallery::Single(items) => {
            for item in items.iter() {
                if item.len() != query.len() {
                    return Err(Error::Shape {
                        op: "rank_gallery",
                        expected: format!("items of length {}", query.len()),
                        got: format!("{}", item.len()),
                    });
                }
            }
            items.iter().map(|g| dist.eval(query, g)).collect()
        }
        Gallery::Pairs(audio, video) => {
            if audio.len() != video.len() {
                return Err(Error::Shape {
                    op: "rank_gallery",
                    expected: "equal-length audio/video galleries".into(),
                    got: format!("{} vs {}", audio.len(), video.len()),
                });
            }
            audio
                .iter()
                .zip(video.iter())
                .map(|(a, v)| 0.5 * (dist.eval(query, a) + dist.eval(query, v)))
                .collect()
        }
    };
    let mut order: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
    order.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(order)
}

/// Retrieval direction: text, audio or video queries against single or
/// paired galleries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    T2A,
    T2V,
    T2AV,
    A2V,
    V2A,
}

impl Direction {
    pub const ALL: [Direction; 5] = [
        Direction::T2A,
        Direction::T2V,
        Direction::T2AV,
        Direction::A2V,
        Direction::V2A,
    ];

    /// True for the class-text query directions.
    pub fn text_query(&self) -> bool {
        matches!(self, Direction::T2A | Direction::T2V | Direction::T2AV)
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t2a" => Ok(Direction::T2A),
            "t2v" => Ok(Direction::T2V),
            "t2av" => Ok(Direction::T2AV),
            "a2v" => Ok(Direction::A2V),
            "v2a" => Ok(Direction::V2A),
            other => Err(Error::InvalidConfig(format!(
                "unknown direction {other:?} (expected t2a, t2v, t2av, a2v or v2a)"
            ))),
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::T2A => "t2a",
            Direction::T2V => "t2v",
            Direction::T2AV => "t2av",
            Direction::A2V => "a2v",
            Direction::V2A => "v2a",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Split;
    use crate::numerics::SeededRng;
    use crate::projector::{Mlp, MlpSpec};

    fn record(audio: Vec<f64>, video: Vec<f64>) -> ExampleRecord {
        ExampleRecord {
            id: "x".into(),
            class_name: "c".into(),
            class_idx: 0,
            split: Split::Test,
            dominant: None,
            audio,
            video,
        }
    }

    #[test]
    fn zero_weight_model_embeds_to_zero() {
        let model = ProjectionModel {
            g_audio: Mlp::zeros(&MlpSpec::new(vec![3, 4, 2]).unwrap()),
            g_video: Mlp::zeros(&MlpSpec::new(vec![3, 4, 2]).unwrap()),
            g_text: Mlp::zeros(&MlpSpec::new(vec![2, 2]).unwrap()),
            normalize: false,
        };
        let rec = record(vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 0.0]);
        let (a, v) = embed_example(&model, &rec).unwrap();
        assert_eq!(a, vec![0.0, 0.0]);
        assert_eq!(v, vec![0.0, 0.0]);
    }

    #[test]
    fn embedding_is_deterministic() {
        let mut rng = SeededRng::new(2);
        let model = ProjectionModel::init(3, 3, 2, 2, 4, false, &mut rng).unwrap();
        let rec = record(vec![0.1, 0.2, 0.3], vec![0.4, 0.5, 0.6]);
        let first = embed_example(&model, &rec).unwrap();
        let second = embed_example(&model, &rec).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn identity_single_layer_model_passes_features_through() {
        // Degenerate: audio/video nets replaced by identity-like nets of
        // matching width. Uses a single-linear-layer Mlp for each.
        let ident = |n: usize| {
            let mut m = Mlp::zeros(&MlpSpec::new(vec![n, n]).unwrap());
            for i in 0..n {
                m.layers[0].w.set(i, i, 1.0);
            }
            m
        };
        let model = ProjectionModel {
            g_audio: ident(3),
            g_video: ident(3),
            g_text: ident(3),
            normalize: false,
        };
        let rec = record(vec![0.5, -1.0, 2.0], vec![1.0, 1.0, 1.0]);
        let (a, v) = embed_example(&model, &rec).unwrap();
        assert_eq!(a, rec.audio);
        assert_eq!(v, rec.video);
    }

    fn classes() -> (Vec<Vec<f64>>, Vec<bool>) {
        (
            vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 3.0]],
            vec![true, true, false],
        )
    }

    #[test]
    fn beta_zero_is_plain_argmin() {
        let (embs, seen) = classes();
        let cfg = InferenceConfig::default();
        let scores = gzsl_classify(&[0.1, 0.0], &[0.1, 0.0], &embs, &seen, Distance::Euclidean, &cfg)
            .unwrap();
        assert_eq!(scores.predicted, 0);
        // Mode both sums the two distances.
        assert!((scores.scores[0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn beta_flips_to_unseen() {
        // Seen class at distance 1.0, unseen at 1.2, beta 0.3.
        let embs = vec![vec![1.0], vec![1.2]];
        let seen = vec![true, false];
        let scores = classify_from_distances(
            &[1.0, 1.2],
            &seen,
            0.3,
        );
        assert_eq!(scores.predicted, 1);
        let _ = embs;
    }

    #[test]
    fn huge_beta_forces_unseen_everywhere() {
        let (embs, seen) = classes();
        let mut cfg = InferenceConfig::default();
        cfg.beta = 1e6;
        for q in [[0.0, 0.0], [2.0, 0.0], [5.0, -3.0]] {
            let s =
                gzsl_classify(&q, &q, &embs, &seen, Distance::Euclidean, &cfg).unwrap();
            assert!(!s.seen[s.predicted]);
        }
    }

    #[test]
    fn unseen_beta_set_is_an_up_set() {
        // Once the prediction is unseen it stays unseen as beta grows.
        let mut rng = SeededRng::new(31);
        for _ in 0..50 {
            let embs: Vec<Vec<f64>> = (0..5)
                .map(|_| (0..3).map(|_| rng.standard_normal()).collect())
                .collect();
            let seen = vec![true, true, true, false, false];
            let q: Vec<f64> = (0..3).map(|_| rng.standard_normal()).collect();
            let dists = class_distances(&q, &q, &embs, Distance::Euclidean, ChosenModality::Both)
                .unwrap();
            let mut was_unseen = false;
            for step in 0..40 {
                let beta = step as f64 * 0.2;
                let s = classify_from_distances(&dists, &seen, beta);
                let is_unseen = !s.seen[s.predicted];
                if was_unseen {
                    assert!(is_unseen, "prediction reverted to seen at beta {beta}");
                }
                was_unseen = is_unseen;
            }
        }
    }

    #[test]
    fn tie_breaks_by_lowest_class_index() {
        let s = classify_from_distances(&[1.0, 1.0, 1.0], &[false, false, false], 0.0);
        assert_eq!(s.predicted, 0);
    }

    fn attn_with_logit(logit: f64, da: usize, dv: usize) -> AttentionModel {
        let mut net = Mlp::zeros(&MlpSpec::new(vec![da + dv, 2, 1]).unwrap());
        net.layers[1].b[0] = logit;
        AttentionModel {
            net,
            input_kind: AttnInputKind::Raw,
        }
    }

    #[test]
    fn select_modality_literal_mapping() {
        let model = ProjectionModel {
            g_audio: Mlp::zeros(&MlpSpec::new(vec![2, 2, 2]).unwrap()),
            g_video: Mlp::zeros(&MlpSpec::new(vec![2, 2, 2]).unwrap()),
            g_text: Mlp::zeros(&MlpSpec::new(vec![2, 2]).unwrap()),
            normalize: false,
        };
        let rec = record(vec![0.0, 0.0], vec![0.0, 0.0]);
        let mut cfg = InferenceConfig::default();
        cfg.attention_threshold = 0.7;

        // alpha = logistic(2.197) = 0.9
        let attn = attn_with_logit(0.9f64.ln() - 0.1f64.ln(), 2, 2);
        assert_eq!(
            select_modality(&attn, &model, &rec, &cfg).unwrap(),
            ChosenModality::Video
        );
        // alpha = 0.1 -> audio
        let attn = attn_with_logit(0.1f64.ln() - 0.9f64.ln(), 2, 2);
        assert_eq!(
            select_modality(&attn, &model, &rec, &cfg).unwrap(),
            ChosenModality::Audio
        );
        // alpha = 0.6 -> both
        let attn = attn_with_logit(0.6f64.ln() - 0.4f64.ln(), 2, 2);
        assert_eq!(
            select_modality(&attn, &model, &rec, &cfg).unwrap(),
            ChosenModality::Both
        );

        cfg.alpha_polarity = AlphaPolarity::Inverted;
        let attn = attn_with_logit(0.9f64.ln() - 0.1f64.ln(), 2, 2);
        assert_eq!(
            select_modality(&attn, &model, &rec, &cfg).unwrap(),
            ChosenModality::Audio
        );
    }

    #[test]
    fn select_returns_both_below_threshold() {
        let model = ProjectionModel {
            g_audio: Mlp::zeros(&MlpSpec::new(vec![1, 1, 1]).unwrap()),
            g_video: Mlp::zeros(&MlpSpec::new(vec![1, 1, 1]).unwrap()),
            g_text: Mlp::zeros(&MlpSpec::new(vec![1, 1]).unwrap()),
            normalize: false,
        };
        let rec = record(vec![0.0], vec![0.0]);
        let cfg = InferenceConfig {
            attention_threshold: 0.75,
            ..Default::default()
        };
        for logit in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            let attn = attn_with_logit(logit, 1, 1);
            let alpha = 1.0 / (1.0 + (-logit as f64).exp());
            if alpha.max(1.0 - alpha) < 0.75 {
                assert_eq!(
                    select_modality(&attn, &model, &rec, &cfg).unwrap(),
                    ChosenModality::Both
                );
            }
        }
    }

    #[test]
    fn gallery_contains_query_rank_one() {
        let gallery = vec![vec![5.0, 5.0], vec![1.0, 2.0], vec![-3.0, 0.0]];
        let ranked = rank_gallery(&[1.0, 2.0], &Gallery::Single(&gallery), Distance::Euclidean)
            .unwrap();
        assert_eq!(ranked[0].0, 1);
        assert_eq!(ranked[0].1, 0.0);
    }

    #[test]
    fn two_items_ordered_by_distance() {
        let gallery = vec![vec![2.0], vec![1.0]];
        let ranked =
            rank_gallery(&[0.0], &Gallery::Single(&gallery), Distance::Euclidean).unwrap();
        assert_eq!(ranked.iter().map(|r| r.0).collect::<Vec<_>>(), vec![1, 0]);
    }

    #[test]
    fn pairs_with_equal_modalities_match_single() {
        let items = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]];
        let q = [0.2, 0.3];
        let single =
            rank_gallery(&q, &Gallery::Single(&items), Distance::Euclidean).unwrap();
        let pairs =
            rank_gallery(&q, &Gallery::Pairs(&items, &items), Distance::Euclidean).unwrap();
        assert_eq!(
            single.iter().map(|r| r.0).collect::<Vec<_>>(),
            pairs.iter().map(|r| r.0).collect::<Vec<_>>()
        );
    }

    #[test]
    fn ranking_invariant_to_constant_shift_and_stable_on_ties() {
        let items = vec![vec![3.0], vec![1.0], vec![1.0], vec![2.0]];
        let ranked =
            rank_gallery(&[0.0], &Gallery::Single(&items), Distance::Euclidean).unwrap();
        // Ties between items 1 and 2 keep index order.
        assert_eq!(ranked.iter().map(|r| r.0).collect::<Vec<_>>(), vec![1, 2, 3, 0]);
        let shifted: Vec<Vec<f64>> = items.iter().map(|v| vec![v[0] + 10.0]).collect();
        let ranked2 =
            rank_gallery(&[10.0], &Gallery::Single(&shifted), Distance::Euclidean).unwrap();
        assert_eq!(
            ranked.iter().map(|r| r.0).collect::<Vec<_>>(),
            ranked2.iter().map(|r| r.0).collect::<Vec<_>>()
        );
    }

    #[test]
    fn empty_gallery_rejected() {
        let empty: Vec<Vec<f64>> = vec![];
        assert!(rank_gallery(&[0.0], &Gallery::Single(&empty), Distance::Euclidean).is_err());
    }
}
