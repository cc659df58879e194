//! Deterministic training loop: shuffled epochs, uniform negative
//! sampling from a different seen class, summed batch gradients, Adam.

use crate::dataio::{Checkpoint, DatasetBundle, Split};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;
use crate::objective::{total_objective, ObjectiveConfig, SeenClasses, TrainPair};
use crate::projector::{AdamHyper, AttentionModel, AttnInputKind, ModelOptimizer, ProjectionModel};

#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub lr: f64,
    pub embed_dim: usize,
    pub hidden: usize,
    pub attention: bool,
    pub attention_hidden: usize,
    pub attention_input: AttnInputKind,
    pub normalize: bool,
    pub objective: ObjectiveConfig,
}

impl TrainSettings {
    /// Defaults for a dataset with the given number of seen classes.
    pub fn defaults_for(num_seen_classes: usize) -> Self {
        TrainSettings {
            epochs: 40,
            batch: 64,
            seed: 1,
            lr: 1e-3,
            embed_dim: 64,
            hidden: 512,
            attention: true,
            attention_hidden: 64,
            attention_input: AttnInputKind::Raw,
            normalize: true,
            objective: ObjectiveConfig::defaults_for(num_seen_classes),
        }
    }
}

/// Per-epoch loss components, averaged per example.
#[derive(Debug, Clone, Copy)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_av: f64,
    pub l_ta: f64,
    pub l_tv: f64,
    pub l_ce: f64,
    pub total: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

pub fn epoch_log_header() -> &'static str {
    "epoch\tl_av\tl_ta\tl_tv\tl_ce\ttotal"
}

pub fn epoch_log_row(e: &EpochLog) -> String {
    format!(
        "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
        e.epoch, e.l_av, e.l_ta, e.l_tv, e.l_ce, e.total
    )
}

pub fn train_model(bundle: &DatasetBundle, settings: &TrainSettings) -> Result<TrainOutcome> {
    settings.objective.validate()?;
    if settings.batch == 0 {
        return Err(Error::InvalidConfig("batch size must be >= 1".into()));
    }
    let seen_global = bundle.seen_class_indices();
    if seen_global.len() < 2 {
        return Err(Error::InvalidConfig(
            "training needs at least two seen classes for negative sampling".into(),
        ));
    }
    let train_idx = bundle.split_indices(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::EmptyInput("train split".into()));
    }

    // Per-class pools for negative sampling.
    let mut class_pool: Vec<Vec<usize>> = vec![Vec::new(); bundle.classes.len()];
    for &i in &train_idx {
        class_pool[bundle.examples[i].class_idx].push(i);
    }
    for &c in &seen_global {
        if class_pool[c].is_empty() {
            return Err(Error::InvalidConfig(format!(
                "seen class {:?} has no train examples",
                bundle.classes[c].name
            )));
        }
    }

    let seen_table = SeenClasses {
        global_indices: seen_global.clone(),
        text: seen_global
            .iter()
            .map(|&c| bundle.classes[c].text_embedding.as_slice())
            .collect(),
    };

    let mut rng = SeededRng::new(settings.seed);
    let mut model = ProjectionModel::init(
        bundle.dims.audio,
        bundle.dims.video,
        bundle.dims.text,
        settings.embed_dim,
        settings.hidden,
        settings.normalize,
        &mut rng,
    )?;
    let mut attention = if settings.attention {
        let (a_in, v_in) = match settings.attention_input {
            AttnInputKind::Raw => (bundle.dims.audio, bundle.dims.video),
            AttnInputKind::Projected => (settings.embed_dim, settings.embed_dim),
        };
        Some(AttentionModel::init(
            a_in,
            v_in,
            settings.attention_hidden,
            settings.attention_input,
            &mut rng,
        )?)
    } else {
        None
    };

    let hyper = AdamHyper::with_lr(settings.lr);
    let mut opt = ModelOptimizer::new();
    opt.register("g_text", &model.g_text);
    opt.register("g_audio", &model.g_audio);
    opt.register("g_video", &model.g_video);
    if let Some(attn) = &attention {
        opt.register("f_attn", &attn.net);
    }

    let mut order = train_idx.clone();
    let mut log = Vec::with_capacity(settings.epochs);
    for epoch in 1..=settings.epochs {
        rng.shuffle(&mut order);
        let (mut s_av, mut s_ta, mut s_tv, mut s_ce, mut s_total) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (step, batch_ids) in order.chunks(settings.batch).enumerate() {
            let pairs: Vec<TrainPair> = batch_ids
                .iter()
                .map(|&i| {
                    let e = &bundle.examples[i];
                    let anchor_pos = seen_table.position(e.class_idx).unwrap();
                    let mut cpos = rng.index(seen_global.len() - 1);
                    if cpos >= anchor_pos {
                        cpos += 1;
                    }
                    let neg_class = seen_global[cpos];
                    let pool = &class_pool[neg_class];
                    let neg = &bundle.examples[pool[rng.index(pool.len())]];
                    TrainPair {
                        audio: &e.audio,
                        video: &e.video,
                        class_idx: e.class_idx,
                        neg_audio: &neg.audio,
                        neg_video: &neg.video,
                        neg_class_idx: neg.class_idx,
                    }
                })
                .collect();

            let eval = total_objective(
                &pairs,
                &model,
                attention.as_ref(),
                &seen_table,
                &settings.objective,
            )?;
            if !eval.total.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss at epoch {epoch} step {step}"
                )));
            }
            s_av += eval.l_av;
            s_ta += eval.l_ta;
            s_tv += eval.l_tv;
            s_ce += eval.l_ce;
            s_total += eval.total;

            opt.begin_step();
            opt.apply("g_text", &mut model.g_text, &eval.grads.g_text, &hyper)?;
            opt.apply("g_audio", &mut model.g_audio, &eval.grads.g_audio, &hyper)?;
            opt.apply("g_video", &mut model.g_video, &eval.grads.g_video, &hyper)?;
            if let (Some(attn), Some(g)) = (attention.as_mut(), eval.grads.attn.as_ref()) {
                opt.apply("f_attn", &mut attn.net, g, &hyper)?;
            }
        }
        let n = order.len() as f64;
        log.push(EpochLog {
            epoch,
            l_av: s_av / n,
            l_ta: s_ta / n,
            l_tv: s_tv / n,
            l_ce: s_ce / n,
            total: s_total / n,
        });
    }

    let checkpoint = Checkpoint::new(
        bundle.dims,
        model,
        attention,
        settings.objective,
        settings.seed,
    );
    checkpoint.validate()?;
    Ok(TrainOutcome { checkpoint, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{gen_synthetic, SynthConfig};

    fn tiny_bundle() -> DatasetBundle {
        gen_synthetic(&SynthConfig {
            num_classes: 5,
            num_unseen: 2,
            per_class: 20,
            audio_dim: 12,
            video_dim: 10,
            text_dim: 6,
            audio_dominant_fraction: 0.2,
            noise_scale: 0.15,
            seed: 11,
        })
        .unwrap()
    }

    fn tiny_settings(bundle: &DatasetBundle) -> TrainSettings {
        let mut s = TrainSettings::defaults_for(bundle.seen_class_indices().len());
        s.epochs = 3;
        s.batch = 16;
        s.embed_dim = 8;
        s.hidden = 16;
        s.attention_hidden = 8;
        s
    }

    #[test]
    fn training_is_deterministic() {
        let bundle = tiny_bundle();
        let settings = tiny_settings(&bundle);
        let a = train_model(&bundle, &settings).unwrap();
        let b = train_model(&bundle, &settings).unwrap();
        assert_eq!(a.checkpoint, b.checkpoint); // bitwise over all params
        assert_eq!(
            a.log.iter().map(epoch_log_row).collect::<Vec<_>>(),
            b.log.iter().map(epoch_log_row).collect::<Vec<_>>()
        );
    }

    #[test]
    fn zero_epochs_keeps_initialization() {
        let bundle = tiny_bundle();
        let mut settings = tiny_settings(&bundle);
        settings.epochs = 0;
        let out = train_model(&bundle, &settings).unwrap();
        assert!(out.log.is_empty());

        // Same init as a fresh seeded model.
        let mut rng = SeededRng::new(settings.seed);
        let fresh = ProjectionModel::init(
            bundle.dims.audio,
            bundle.dims.video,
            bundle.dims.text,
            settings.embed_dim,
            settings.hidden,
            settings.normalize,
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.checkpoint.projection, fresh);
    }

    #[test]
    fn loss_trend_is_non_increasing_over_epoch_windows() {
        let bundle = tiny_bundle();
        let mut settings = tiny_settings(&bundle);
        settings.epochs = 30;
        let out = train_model(&bundle, &settings).unwrap();
        let window = |range: std::ops::Range<usize>| {
            let w = &out.log[range];
            w.iter().map(|e| e.total).sum::<f64>() / w.len() as f64
        };
        let (w1, w2, w3) = (window(0..10), window(10..20), window(20..30));
        assert!(w2 <= w1, "epochs 11-20 mean {w2} above 1-10 mean {w1}");
        assert!(w3 <= w2, "epochs 21-30 mean {w3} above 11-20 mean {w2}");
    }

    #[test]
    fn unseen_only_dataset_rejected() {
        let bundle = tiny_bundle();
        let settings = tiny_settings(&bundle);
        let mut broken = bundle.clone();
        for e in &mut broken.examples {
            if e.split == Split::Train {
                e.split = Split::Val;
            }
        }
        assert!(matches!(
            train_model(&broken, &settings),
            Err(Error::EmptyInput(_))
        ));
    }
}
