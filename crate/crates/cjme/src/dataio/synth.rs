//! Deterministic synthetic dataset generator.
//!
//! Each class owns a latent prototype; the text embedding is the
//! prototype through a fixed random linear map, and the audio/video
//! features are the prototype through two other fixed maps plus
//! per-example Gaussian noise. A configurable fraction of examples has
//! one modality replaced with unit-scale noise (disjoint sets for audio
//! and video) to create per-example dominant modalities, recorded in the
//! example table.

use super::dataset::{
    ClassEntry, DatasetBundle, Dims, Dominance, ExampleRecord, SeenFlag, Split,
};
use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, SeededRng};

const LATENT_DIM: usize = 8;
/// Unseen prototypes are drawn around a seen parent at this scale
/// (independent classes would sit at ~sqrt(2 LATENT_DIM)). Keeping unseen
/// classes similar to seen ones makes zero-shot transfer feasible while
/// the classifier keeps its seen bias at beta = 0.
const UNSEEN_PROXIMITY: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub num_unseen: usize,
    pub per_class: usize,
    pub audio_dim: usize,
    pub video_dim: usize,
    pub text_dim: usize,
    /// Fraction of examples whose video is degraded to noise (audio
    /// dominant); the same fraction, disjoint, gets degraded audio.
    pub audio_dominant_fraction: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_classes: 12,
            num_unseen: 4,
            per_class: 200,
            audio_dim: 64,
            video_dim: 64,
            text_dim: 32,
            audio_dominant_fraction: 0.0,
            noise_scale: 0.05,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_unseen == 0 || self.num_unseen >= self.num_classes {
            return Err(Error::InvalidConfig(
                "need 1 <= num_unseen < num_classes".into(),
            ));
        }
        if self.per_class < 10 {
            return Err(Error::InvalidConfig("per_class must be >= 10".into()));
        }
        if !(0.0..=1.0).contains(&self.audio_dominant_fraction) {
            return Err(Error::InvalidConfig(
                "audio_dominant_fraction must be in [0, 1]".into(),
            ));
        }
        if self.audio_dominant_fraction > 0.5 {
            return Err(Error::InvalidConfig(
                "audio_dominant_fraction above 0.5 cannot keep the degraded sets disjoint".into(),
            ));
        }
        if self.noise_scale < 0.0 {
            return Err(Error::InvalidConfig("noise_scale must be >= 0".into()));
        }
        if self.audio_dim == 0 || self.video_dim == 0 || self.text_dim == 0 {
            return Err(Error::InvalidConfig("feature dims must be positive".into()));
        }
        Ok(())
    }
}

fn random_map(rows: usize, rng: &mut SeededRng) -> DenseMatrix {
    let scale = 1.0 / (LATENT_DIM as f64).sqrt();
    DenseMatrix::from_fn(rows, LATENT_DIM, |_, _| rng.standard_normal() * scale)
}

fn normal_vec(n: usize, rng: &mut SeededRng) -> Vec<f64> {
    (0..n).map(|_| rng.standard_normal()).collect()
}

// Features go through f32 before entering the bundle so the in-memory
// values equal what a save/load round trip produces.
fn quantize(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| (x as f32) as f64).collect()
}

pub fn gen_synthetic(cfg: &SynthConfig) -> Result<DatasetBundle> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed);

    let map_text = random_map(cfg.text_dim, &mut rng);
    let map_audio = random_map(cfg.audio_dim, &mut rng);
    let map_video = random_map(cfg.video_dim, &mut rng);

    let num_seen = cfg.num_classes - cfg.num_unseen;
    let mut prototypes: Vec<Vec<f64>> = Vec::with_capacity(cfg.num_classes);
    for _ in 0..num_seen {
        prototypes.push(normal_vec(LATENT_DIM, &mut rng));
    }
    for u in 0..cfg.num_unseen {
        let parent = prototypes[u % num_seen].clone();
        let offset = normal_vec(LATENT_DIM, &mut rng);
        let norm = offset.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        // Fixed-length offset: every unseen class sits at the same latent
        // distance from its parent.
        let scale = UNSEEN_PROXIMITY * (LATENT_DIM as f64).sqrt() / norm;
        let p: Vec<f64> = parent
            .iter()
            .zip(&offset)
            .map(|(par, o)| par + scale * o)
            .collect();
        prototypes.push(p);
    }
    let classes: Vec<ClassEntry> = prototypes
        .iter()
        .enumerate()
        .map(|(c, proto)| {
            Ok(ClassEntry {
                name: format!("class_{c:02}"),
                seen: if c < num_seen {
                    SeenFlag::Seen
                } else {
                    SeenFlag::Unseen
                },
                text_embedding: map_text.matvec(proto)?,
            })
        })
        .collect::<Result<_>>()?;

    let mut examples = Vec::with_capacity(cfg.num_classes * cfg.per_class);
    for (c, proto) in prototypes.iter().enumerate() {
        let clean_audio = map_audio.matvec(proto)?;
        let clean_video = map_video.matvec(proto)?;

        let mut audio_rows = Vec::with_capacity(cfg.per_class);
        let mut video_rows = Vec::with_capacity(cfg.per_class);
        for _ in 0..cfg.per_class {
            let mut a = clean_audio.clone();
            for (ai, n) in a.iter_mut().zip(normal_vec(cfg.audio_dim, &mut rng)) {
                *ai += cfg.noise_scale * n;
            }
            let mut v = clean_video.clone();
            for (vi, n) in v.iter_mut().zip(normal_vec(cfg.video_dim, &mut rng)) {
                *vi += cfg.noise_scale * n;
            }
            audio_rows.push(a);
            video_rows.push(v);
        }

        // Degrade disjoint subsets: unit-scale noise carries no class
        // signal while keeping the marginal scale of clean features.
        let n_deg = (cfg.audio_dominant_fraction * cfg.per_class as f64).floor() as usize;
        let mut dominance = vec![Dominance::Neither; cfg.per_class];
        let mut order: Vec<usize> = (0..cfg.per_class).collect();
        rng.shuffle(&mut order);
        for &k in order.iter().take(n_deg) {
            video_rows[k] = normal_vec(cfg.video_dim, &mut rng);
            dominance[k] = Dominance::Audio;
        }
        for &k in order.iter().skip(n_deg).take(n_deg) {
            audio_rows[k] = normal_vec(cfg.audio_dim, &mut rng);
            dominance[k] = Dominance::Video;
        }

        // Per-class stratified splits: seen classes 60-20-20, unseen
        // classes 50-50 across val/test (never train).
        let mut split_order: Vec<usize> = (0..cfg.per_class).collect();
        rng.shuffle(&mut split_order);
        let mut splits = vec![Split::Test; cfg.per_class];
        if c < num_seen {
            let n_train = cfg.per_class * 6 / 10;
            let n_val = cfg.per_class * 2 / 10;
            for (rank, &k) in split_order.iter().enumerate() {
                splits[k] = if rank < n_train {
                    Split::Train
                } else if rank < n_train + n_val {
                    Split::Val
                } else {
                    Split::Test
                };
            }
        } else {
            let n_val = cfg.per_class / 2;
            for (rank, &k) in split_order.iter().enumerate() {
                splits[k] = if rank < n_val { Split::Val } else { Split::Test };
            }
        }

        let class_name = classes[c].name.clone();
        for k in 0..cfg.per_class {
            examples.push(ExampleRecord {
                id: format!("{class_name}_{k:04}"),
                class_name: class_name.clone(),
                class_idx: c,
                split: splits[k],
                dominant: Some(dominance[k]),
                audio: quantize(std::mem::take(&mut audio_rows[k])),
                video: quantize(std::mem::take(&mut video_rows[k])),
            });
        }
    }

    let bundle = DatasetBundle {
        classes,
        examples,
        dims: Dims {
            audio: cfg.audio_dim,
            video: cfg.video_dim,
            text: cfg.text_dim,
        },
    };
    bundle.validate()?;
    Ok(bundle)
}
