//! Binary checkpoint codec.
//!
//! Layout (all multi-byte values little-endian):
//!
//! ```text
//! magic  b"CJME"
//! u32    version (currently 1)
//! u32 x6 audio_dim, video_dim, text_dim, embed_dim, hidden, attn_hidden
//!        (attn_hidden is 0 when no attention network is stored)
//! u8     flags: bit0 attention present, bit1 normalize embeddings,
//!        bit2 attention reads projected embeddings
//! tensors, each as u64 count + count f64 values, in fixed order:
//!   g_t.W0  g_t.b0
//!   g_a.W0  g_a.b0  g_a.W1  g_a.b1
//!   g_v.W0  g_v.b0  g_v.W1  g_v.b1
//!   [f_attn.W0  f_attn.b0  f_attn.W1  f_attn.b1]   (if attention)
//! f64 x7 margin, lambda, gamma, alpha_v, alpha_a, xi, eps_dist
//! u8     distance (0 euclidean, 1 squared euclidean)
//! u64    training seed
//! ```
//!
//! The round trip is bit-exact.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::dataset::Dims;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;
use crate::objective::{Distance, ObjectiveConfig};
use crate::projector::{AttentionModel, AttnInputKind, Layer, Mlp, MlpSpec, ProjectionModel};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"CJME";

const FLAG_ATTENTION: u8 = 1;
const FLAG_NORMALIZE: u8 = 2;
const FLAG_ATTN_PROJECTED: u8 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub dims: Dims,
    pub projection: ProjectionModel,
    pub attention: Option<AttentionModel>,
    pub objective: ObjectiveConfig,
    pub seed: u64,
}

impl Checkpoint {
    pub fn new(
        dims: Dims,
        projection: ProjectionModel,
        attention: Option<AttentionModel>,
        objective: ObjectiveConfig,
        seed: u64,
    ) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            dims,
            projection,
            attention,
            objective,
            seed,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.projection.embed_dim()
    }

    /// Rejects models whose network shapes disagree with the stored dims
    /// or with each other.
    pub fn validate(&self) -> Result<()> {
        self.projection.validate()?;
        let p = &self.projection;
        if p.audio_dim() != self.dims.audio
            || p.video_dim() != self.dims.video
            || p.text_dim() != self.dims.text
        {
            return Err(Error::Checkpoint(format!(
                "projector input dims ({}, {}, {}) disagree with header ({}, {}, {})",
                p.audio_dim(),
                p.video_dim(),
                p.text_dim(),
                self.dims.audio,
                self.dims.video,
                self.dims.text
            )));
        }
        if let Some(attn) = &self.attention {
            let expected = match attn.input_kind {
                AttnInputKind::Raw => self.dims.audio + self.dims.video,
                AttnInputKind::Projected => 2 * p.embed_dim(),
            };
            if attn.input_dim() != expected {
                return Err(Error::Checkpoint(format!(
                    "attention input width {} does not match {}",
                    attn.input_dim(),
                    expected
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_tensor(w: &mut impl Write, data: &[f64]) -> Result<()> {
    write_u64(w, data.len() as u64)?;
    for &v in data {
        write_f64(w, v)?;
    }
    Ok(())
}

pub(crate) fn read_exact_buf(r: &mut impl Read, n: usize) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Checkpoint("unexpected end of file".into()))?;
    Ok(buf)
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32> {
    let b = read_exact_buf(r, 4)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

pub(crate) fn read_u64(r: &mut impl Read) -> Result<u64> {
    let b = read_exact_buf(r, 8)?;
    Ok(u64::from_le_bytes(b.try_into().unwrap()))
}

pub(crate) fn read_f64(r: &mut impl Read) -> Result<f64> {
    let b = read_exact_buf(r, 8)?;
    Ok(f64::from_le_bytes(b.try_into().unwrap()))
}

/// Reads a length-prefixed tensor and checks it holds `expected` values.
pub(crate) fn read_tensor_raw(r: &mut impl Read, name: &str, expected: usize) -> Result<Vec<f64>> {
    let len = read_u64(r)? as usize;
    if len != expected {
        return Err(Error::Checkpoint(format!(
            "tensor {name}: expected {expected} values, found {len}"
        )));
    }
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(read_f64(r)?);
    }
    Ok(out)
}

fn write_mlp(w: &mut impl Write, mlp: &Mlp) -> Result<()> {
    for layer in &mlp.layers {
        write_tensor(w, layer.w.data())?;
        write_tensor(w, &layer.b)?;
    }
    Ok(())
}

fn read_mlp(r: &mut impl Read, name: &str, spec: &MlpSpec) -> Result<Mlp> {
    let mut layers = Vec::new();
    for (l, pair) in spec.widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let w_data = read_tensor_raw(r, &format!("{name}.layer{l}.w"), fan_out * fan_in)?;
        let b = read_tensor_raw(r, &format!("{name}.layer{l}.b"), fan_out)?;
        layers.push(Layer {
            w: DenseMatrix::from_vec(fan_out, fan_in, w_data)?,
            b,
        });
    }
    Ok(Mlp { layers })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    ckpt.validate()?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, ckpt.version)?;
    write_u32(&mut w, ckpt.dims.audio as u32)?;
    write_u32(&mut w, ckpt.dims.video as u32)?;
    write_u32(&mut w, ckpt.dims.text as u32)?;
    write_u32(&mut w, ckpt.projection.embed_dim() as u32)?;
    write_u32(&mut w, ckpt.projection.hidden_dim() as u32)?;
    let attn_hidden = ckpt
        .attention
        .as_ref()
        .map(|a| a.net.layers[0].w.rows())
        .unwrap_or(0);
    write_u32(&mut w, attn_hidden as u32)?;

    let mut flags = 0u8;
    if ckpt.attention.is_some() {
        flags |= FLAG_ATTENTION;
    }
    if ckpt.projection.normalize {
        flags |= FLAG_NORMALIZE;
    }
    if matches!(
        ckpt.attention.as_ref().map(|a| a.input_kind),
        Some(AttnInputKind::Projected)
    ) {
        flags |= FLAG_ATTN_PROJECTED;
    }
    w.write_all(&[flags])?;

    write_mlp(&mut w, &ckpt.projection.g_text)?;
    write_mlp(&mut w, &ckpt.projection.g_audio)?;
    write_mlp(&mut w, &ckpt.projection.g_video)?;
    if let Some(attn) = &ckpt.attention {
        write_mlp(&mut w, &attn.net)?;
    }

    let o = &ckpt.objective;
    for v in [o.margin, o.lambda, o.gamma, o.alpha_v, o.alpha_a, o.xi, o.eps_dist] {
        write_f64(&mut w, v)?;
    }
    w.write_all(&[match o.distance {
        Distance::Euclidean => 0u8,
        Distance::SquaredEuclidean => 1u8,
    }])?;
    write_u64(&mut w, ckpt.seed)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = fs::File::open(path).map_err(|_| Error::MissingFile {
        path: path.to_path_buf(),
    })?;
    let mut r = BufReader::new(file);

    let magic = read_exact_buf(&mut r, 4)?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {:?} (expected {:?})",
            magic, MAGIC
        )));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            expected: CHECKPOINT_VERSION,
            got: version,
        });
    }
    let audio_dim = read_u32(&mut r)? as usize;
    let video_dim = read_u32(&mut r)? as usize;
    let text_dim = read_u32(&mut r)? as usize;
    let embed_dim = read_u32(&mut r)? as usize;
    let hidden = read_u32(&mut r)? as usize;
    let attn_hidden = read_u32(&mut r)? as usize;
    let flags = read_exact_buf(&mut r, 1)?[0];
    let has_attention = flags & FLAG_ATTENTION != 0;
    let normalize = flags & FLAG_NORMALIZE != 0;
    let attn_projected = flags & FLAG_ATTN_PROJECTED != 0;
    if has_attention && attn_hidden == 0 {
        return Err(Error::Checkpoint(
            "attention flag set but attention hidden width is 0".into(),
        ));
    }

    let g_text = read_mlp(&mut r, "g_t", &MlpSpec::new(vec![text_dim, embed_dim])?)?;
    let g_audio = read_mlp(
        &mut r,
        "g_a",
        &MlpSpec::new(vec![audio_dim, hidden, embed_dim])?,
    )?;
    let g_video = read_mlp(
        &mut r,
        "g_v",
        &MlpSpec::new(vec![video_dim, hidden, embed_dim])?,
    )?;
    let attention = if has_attention {
        let input_kind = if attn_projected {
            AttnInputKind::Projected
        } else {
            AttnInputKind::Raw
        };
        let input_dim = match input_kind {
            AttnInputKind::Raw => audio_dim + video_dim,
            AttnInputKind::Projected => 2 * embed_dim,
        };
        let net = read_mlp(
            &mut r,
            "f_attn",
            &MlpSpec::new(vec![input_dim, attn_hidden, 1])?,
        )?;
        Some(AttentionModel { net, input_kind })
    } else {
        None
    };

    let mut scalars = [0.0f64; 7];
    for s in scalars.iter_mut() {
        *s = read_f64(&mut r)?;
    }
    let distance = match read_exact_buf(&mut r, 1)?[0] {
        0 => Distance::Euclidean,
        1 => Distance::SquaredEuclidean,
        other => {
            return Err(Error::Checkpoint(format!(
                "unknown distance code {other}"
            )))
        }
    };
    let seed = read_u64(&mut r)?;

    let ckpt = Checkpoint {
        version,
        dims: Dims {
            audio: audio_dim,
            video: video_dim,
            text: text_dim,
        },
        projection: ProjectionModel {
            g_audio,
            g_video,
            g_text,
            normalize,
        },
        attention,
        objective: ObjectiveConfig {
            margin: scalars[0],
            lambda: scalars[1],
            gamma: scalars[2],
            alpha_v: scalars[3],
            alpha_a: scalars[4],
            xi: scalars[5],
            eps_dist: scalars[6],
            distance,
        },
        seed,
    };
    ckpt.validate()?;
    Ok(ckpt)
}
