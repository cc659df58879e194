//! Loss terms for embedding training: cross-modal triplet hinges, the
//! audio-video alignment loss, entropy-derived attention labels, the
//! attention cross-entropy, and their weighted composition.

use crate::error::{Error, Result};
use crate::projector::{
    normalize, normalize_backward, AttentionModel, AttnInputKind, Mlp, MlpCache, MlpGrads,
    NormCache, ProjectionModel,
};

/// Distance used in the triplet losses and at inference. The alignment
/// loss is always squared l2 regardless of this choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distance {
    Euclidean,
    SquaredEuclidean,
}

impl Distance {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        match self {
            Distance::Euclidean => sq.sqrt(),
            Distance::SquaredEuclidean => sq,
        }
    }

    /// Returns `(d, grad wrt x)`; the gradient with respect to `y` is the
    /// negation. The euclidean gradient at coincident points is taken as
    /// zero (subgradient convention at the non-differentiable origin).
    pub fn eval_grad(&self, x: &[f64], y: &[f64]) -> (f64, Vec<f64>) {
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        let sq: f64 = diff.iter().map(|d| d * d).sum();
        match self {
            Distance::Euclidean => {
                let d = sq.sqrt();
                if d > 1e-300 {
                    (d, diff.iter().map(|v| v / d).collect())
                } else {
                    (d, vec![0.0; diff.len()])
                }
            }
            Distance::SquaredEuclidean => (sq, diff.iter().map(|v| 2.0 * v).collect()),
        }
    }
}

impl std::str::FromStr for Distance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Distance::Euclidean),
            "sq-euclidean" => Ok(Distance::SquaredEuclidean),
            other => Err(Error::InvalidConfig(format!(
                "unknown distance {other:?} (expected euclidean or sq-euclidean)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    /// Triplet margin, > 0.
    pub margin: f64,
    /// Weight of the audio-video alignment term.
    pub lambda: f64,
    /// Weight of the triplet block.
    pub gamma: f64,
    /// Static video-triplet weight when attention is off.
    pub alpha_v: f64,
    /// Static audio-triplet weight when attention is off.
    pub alpha_a: f64,
    /// Entropy-difference threshold for attention labels.
    pub xi: f64,
    pub distance: Distance,
    /// Floor applied to distances before inversion.
    pub eps_dist: f64,
}

impl ObjectiveConfig {
    /// Defaults; `xi` scales with the number of classes the entropy is
    /// computed over (0.2 * ln N_c).
    pub fn defaults_for(num_seen_classes: usize) -> Self {
        ObjectiveConfig {
            margin: 1.0,
            lambda: 1.0,
            gamma: 1.0,
            alpha_v: 1.0,
            alpha_a: 1.0,
            xi: 0.2 * (num_seen_classes.max(2) as f64).ln(),
            distance: Distance::Euclidean,
            eps_dist: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::InvalidConfig("margin must be > 0".into()));
        }
        if !(self.eps_dist > 0.0) {
            return Err(Error::InvalidConfig("eps_dist must be > 0".into()));
        }
        if self.lambda < 0.0 || self.gamma < 0.0 || self.xi < 0.0 {
            return Err(Error::InvalidConfig(
                "lambda, gamma and xi must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Triplet hinge `max(0, d(x_p, t_p) - d(x_q, t_p) + margin)` with
/// gradients for all three embeddings. The hinge is inactive (zero
/// gradients) when its argument is <= 0, including exactly at the kink.
#[derive(Debug, Clone)]
pub struct TripletOut {
    pub loss: f64,
    pub grad_pos: Vec<f64>,
    pub grad_class: Vec<f64>,
    pub grad_neg: Vec<f64>,
}

pub fn triplet_hinge(
    x_p: &[f64],
    t_p: &[f64],
    x_q: &[f64],
    cfg: &ObjectiveConfig,
) -> Result<TripletOut> {
    if x_p.len() != t_p.len() || x_q.len() != t_p.len() {
        return Err(Error::Shape {
            op: "triplet_hinge",
            expected: format!("three vectors of length {}", t_p.len()),
            got: format!("{}, {}, {}", x_p.len(), t_p.len(), x_q.len()),
        });
    }
    let (d_pos, g_pos) = cfg.distance.eval_grad(x_p, t_p);
    let (d_neg, g_neg) = cfg.distance.eval_grad(x_q, t_p);
    let arg = d_pos - d_neg + cfg.margin;
    let dim = t_p.len();
    if arg > 0.0 {
        // d/dt_p = -grad(d_pos wrt x_p) + grad(d_neg wrt x_q)
        let grad_class: Vec<f64> = (0..dim).map(|i| -g_pos[i] + g_neg[i]).collect();
        Ok(TripletOut {
            loss: arg,
            grad_pos: g_pos,
            grad_class,
            grad_neg: g_neg.iter().map(|v| -v).collect(),
        })
    } else {
        Ok(TripletOut {
            loss: 0.0,
            grad_pos: vec![0.0; dim],
            grad_class: vec![0.0; dim],
            grad_neg: vec![0.0; dim],
        })
    }
}

/// Squared-l2 alignment between the audio and video embeddings of one
/// example. Returns `(loss, grad wrt a)`; the gradient for `v` is the
/// negation.
pub fn av_alignment_loss(a: &[f64], v: &[f64]) -> Result<(f64, Vec<f64>)> {
    if a.len() != v.len() {
        return Err(Error::Shape {
            op: "av_alignment_loss",
            expected: format!("vectors of length {}", a.len()),
            got: format!("{}", v.len()),
        });
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; a.len()];
    for i in 0..a.len() {
        let d = a[i] - v[i];
        loss += d * d;
        grad[i] = 2.0 * d;
    }
    Ok((loss, grad))
}

/// Inverse-distance class probabilities: floor each distance at
/// `eps_dist`, invert, l1-normalize.
pub fn probs_from_distances(dists: &[f64], eps_dist: f64) -> Result<Vec<f64>> {
    if dists.is_empty() {
        return Err(Error::EmptyInput("probs_from_distances".into()));
    }
    let inv: Vec<f64> = dists.iter().map(|d| 1.0 / d.max(eps_dist)).collect();
    let sum: f64 = inv.iter().sum();
    Ok(inv.iter().map(|v| v / sum).collect())
}

/// Shannon entropy in nats, with 0 ln 0 := 0.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::EmptyInput("entropy".into()));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || p.iter().any(|&v| v < 0.0) {
        return Err(Error::Numerical(format!(
            "entropy: not a probability distribution (sum {sum})"
        )));
    }
    Ok(p.iter()
        .map(|&v| if v > 0.0 { -v * v.ln() } else { 0.0 })
        .sum())
}

/// Attention label from the two modality entropies: 0 when video entropy
/// is lower by more than xi, 1 when audio entropy is lower by more than
/// xi, 0.5 otherwise.
pub fn alpha_label(e_a: f64, e_v: f64, xi: f64) -> f64 {
    if e_v < e_a - xi {
        0.0
    } else if e_a < e_v - xi {
        1.0
    } else {
        0.5
    }
}

/// Soft-target binary cross-entropy on alpha. Returns `(loss, grad wrt
/// the logit)`; alpha is clamped inside (0, 1) before the logs.
pub fn attention_bce(alpha_pred: f64, target: f64) -> (f64, f64) {
    let a = alpha_pred.clamp(1e-7, 1.0 - 1e-7);
    let loss = -(target * a.ln() + (1.0 - target) * (1.0 - a).ln());
    (loss, alpha_pred - target)
}

/// One training pair: an anchor example and a negative example drawn from
/// a different seen class.
#[derive(Debug, Clone)]
pub struct TrainPair<'a> {
    pub audio: &'a [f64],
    pub video: &'a [f64],
    pub class_idx: usize,
    pub neg_audio: &'a [f64],
    pub neg_video: &'a [f64],
    pub neg_class_idx: usize,
}

/// Seen-class text embeddings available during training, keyed by global
/// class index.
#[derive(Debug, Clone)]
pub struct SeenClasses<'a> {
    pub global_indices: Vec<usize>,
    pub text: Vec<&'a [f64]>,
}

impl<'a> SeenClasses<'a> {
    pub fn position(&self, global_idx: usize) -> Option<usize> {
        self.global_indices.iter().position(|&g| g == global_idx)
    }

    pub fn len(&self) -> usize {
        self.global_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.global_indices.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub g_audio: MlpGrads,
    pub g_video: MlpGrads,
    pub g_text: MlpGrads,
    pub attn: Option<MlpGrads>,
}

/// Batch loss value plus everything the optimizer needs. The component
/// sums are unweighted; `total` applies the configured weights (and adds
/// the attention cross-entropy when attention is on).
#[derive(Debug, Clone)]
pub struct ObjectiveEval {
    pub total: f64,
    pub l_av: f64,
    pub l_ta: f64,
    pub l_tv: f64,
    pub l_ce: f64,
    pub grads: ModelGrads,
}

struct Projected {
    value: Vec<f64>,
    mlp: MlpCache,
    norm: Option<NormCache>,
}

fn project(mlp: &Mlp, x: &[f64], do_norm: bool) -> Result<Projected> {
    let (out, cache) = mlp.forward(x)?;
    if do_norm {
        let (value, norm) = normalize(&out);
        Ok(Projected {
            value,
            mlp: cache,
            norm: Some(norm),
        })
    } else {
        Ok(Projected {
            value: out,
            mlp: cache,
            norm: None,
        })
    }
}

fn project_backward(
    mlp: &Mlp,
    proj: &Projected,
    grad_value: &[f64],
    grads: &mut MlpGrads,
) -> Result<Vec<f64>> {
    match &proj.norm {
        Some(nc) => {
            let g = normalize_backward(nc, grad_value);
            mlp.backward_into(&proj.mlp, &g, grads)
        }
        None => mlp.backward_into(&proj.mlp, grad_value, grads),
    }
}

fn axpy(dst: &mut [f64], scale: f64, src: &[f64]) {
    if scale == 0.0 {
        return;
    }
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

/// Full objective over a batch: `lambda * sum L_AV + gamma * sum (alpha_v
/// L_TV + alpha_a L_TA)`, plus the attention cross-entropy when an
/// attention model is given. With attention the per-sample weights are
/// `alpha_v = alpha`, `alpha_a = 1 - alpha`, and the entropy-derived
/// labels are constants: no gradient flows through label generation.
pub fn total_objective(
    pairs: &[TrainPair],
    model: &ProjectionModel,
    attn: Option<&AttentionModel>,
    seen: &SeenClasses,
    cfg: &ObjectiveConfig,
) -> Result<ObjectiveEval> {
    cfg.validate()?;
    let mut grads = ModelGrads {
        g_audio: model.g_audio.grads_zeros(),
        g_video: model.g_video.grads_zeros(),
        g_text: model.g_text.grads_zeros(),
        attn: attn.map(|a| a.net.grads_zeros()),
    };

    // Seen-class text embeddings, shared across the batch.
    let text_embs: Vec<Projected> = seen
        .text
        .iter()
        .map(|t| project(&model.g_text, t, model.normalize))
        .collect::<Result<_>>()?;
    let mut text_grad: Vec<Vec<f64>> = text_embs
        .iter()
        .map(|e| vec![0.0; e.value.len()])
        .collect();

    let mut total = 0.0;
    let (mut sum_av, mut sum_ta, mut sum_tv, mut sum_ce) = (0.0, 0.0, 0.0, 0.0);

    for (k, pair) in pairs.iter().enumerate() {
        let pos = seen.position(pair.class_idx).ok_or_else(|| {
            Error::Protocol(format!(
                "batch item {k}: class {} is not a seen training class",
                pair.class_idx
            ))
        })?;
        if seen.position(pair.neg_class_idx).is_none() {
            return Err(Error::Protocol(format!(
                "batch item {k}: negative class {} is not a seen training class",
                pair.neg_class_idx
            )));
        }
        if pair.neg_class_idx == pair.class_idx {
            return Err(Error::Protocol(format!(
                "batch item {k}: negative shares the anchor class {}",
                pair.class_idx
            )));
        }

        let a_p = project(&model.g_audio, pair.audio, model.normalize)?;
        let v_p = project(&model.g_video, pair.video, model.normalize)?;
        let a_q = project(&model.g_audio, pair.neg_audio, model.normalize)?;
        let v_q = project(&model.g_video, pair.neg_video, model.normalize)?;
        let t_p = &text_embs[pos].value;

        let attn_state = match attn {
            Some(am) => {
                let (alpha, cache) = match am.input_kind {
                    AttnInputKind::Raw => am.forward(pair.audio, pair.video)?,
                    AttnInputKind::Projected => am.forward(&a_p.value, &v_p.value)?,
                };
                Some((alpha, cache))
            }
            None => None,
        };
        let (alpha_v, alpha_a) = match &attn_state {
            Some((alpha, _)) => (*alpha, 1.0 - *alpha),
            None => (cfg.alpha_v, cfg.alpha_a),
        };

        let (loss_av, g_av) = av_alignment_loss(&a_p.value, &v_p.value)?;
        let ta = triplet_hinge(&a_p.value, t_p, &a_q.value, cfg)?;
        let tv = triplet_hinge(&v_p.value, t_p, &v_q.value, cfg)?;

        sum_av += loss_av;
        sum_ta += ta.loss;
        sum_tv += tv.loss;
        total += cfg.lambda * loss_av + cfg.gamma * (alpha_v * tv.loss + alpha_a * ta.loss);

        let dim = model.embed_dim();
        let mut d_a_p = vec![0.0; dim];
        let mut d_v_p = vec![0.0; dim];
        let mut d_a_q = vec![0.0; dim];
        let mut d_v_q = vec![0.0; dim];
        axpy(&mut d_a_p, cfg.lambda, &g_av);
        axpy(&mut d_v_p, -cfg.lambda, &g_av);
        axpy(&mut d_a_p, cfg.gamma * alpha_a, &ta.grad_pos);
        axpy(&mut d_a_q, cfg.gamma * alpha_a, &ta.grad_neg);
        axpy(&mut d_v_p, cfg.gamma * alpha_v, &tv.grad_pos);
        axpy(&mut d_v_q, cfg.gamma * alpha_v, &tv.grad_neg);
        axpy(&mut text_grad[pos], cfg.gamma * alpha_a, &ta.grad_class);
        axpy(&mut text_grad[pos], cfg.gamma * alpha_v, &tv.grad_class);

        if let (Some(am), Some((alpha, cache))) = (attn, &attn_state) {
            // Entropy-derived label, detached from the gradient graph.
            let dists_a: Vec<f64> = text_embs
                .iter()
                .map(|t| cfg.distance.eval(&a_p.value, &t.value))
                .collect();
            let dists_v: Vec<f64> = text_embs
                .iter()
                .map(|t| cfg.distance.eval(&v_p.value, &t.value))
                .collect();
            let e_a = entropy(&probs_from_distances(&dists_a, cfg.eps_dist)?)?;
            let e_v = entropy(&probs_from_distances(&dists_v, cfg.eps_dist)?)?;
            let label = alpha_label(e_a, e_v, cfg.xi);

            let (ce, d_logit_ce) = attention_bce(*alpha, label);
            sum_ce += ce;
            total += ce;

            // alpha multiplies the triplet losses, so d total / d alpha =
            // gamma (L_TV - L_TA); chain through the logistic.
            let d_logit =
                cfg.gamma * (tv.loss - ta.loss) * alpha * (1.0 - alpha) + d_logit_ce;
            let attn_grads = grads.attn.as_mut().unwrap();
            let d_input = am.net.backward_into(&cache.mlp, &[d_logit], attn_grads)?;
            if am.input_kind == AttnInputKind::Projected {
                axpy(&mut d_a_p, 1.0, &d_input[..dim]);
                axpy(&mut d_v_p, 1.0, &d_input[dim..]);
            }
        }

        project_backward(&model.g_audio, &a_p, &d_a_p, &mut grads.g_audio)?;
        project_backward(&model.g_video, &v_p, &d_v_p, &mut grads.g_video)?;
        project_backward(&model.g_audio, &a_q, &d_a_q, &mut grads.g_audio)?;
        project_backward(&model.g_video, &v_q, &d_v_q, &mut grads.g_video)?;
    }

    for (emb, g) in text_embs.iter().zip(&text_grad) {
        project_backward(&model.g_text, emb, g, &mut grads.g_text)?;
    }

    Ok(ObjectiveEval {
        total,
        l_av: sum_av,
        l_ta: sum_ta,
        l_tv: sum_tv,
        l_ce: sum_ce,
        grads,
    })
}
