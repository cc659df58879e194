//! Modality attention network: concatenated audio+video input through one
//! relu hidden layer to a single logit, squashed to alpha in (0, 1).

use super::{Mlp, MlpCache, MlpSpec};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// What the attention network consumes: raw pre-projection features
/// (default) or the projected embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttnInputKind {
    Raw,
    Projected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionModel {
    pub net: Mlp,
    pub input_kind: AttnInputKind,
}

#[derive(Debug, Clone)]
pub struct AttnCache {
    pub mlp: MlpCache,
    pub logit: f64,
    pub alpha: f64,
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl AttentionModel {
    pub fn init(
        audio_in: usize,
        video_in: usize,
        hidden: usize,
        input_kind: AttnInputKind,
        rng: &mut SeededRng,
    ) -> Result<AttentionModel> {
        let net = Mlp::init(&MlpSpec::new(vec![audio_in + video_in, hidden, 1])?, rng);
        Ok(AttentionModel { net, input_kind })
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    /// alpha = logistic(f_attn(concat(a, v))).
    pub fn forward(&self, a_in: &[f64], v_in: &[f64]) -> Result<(f64, AttnCache)> {
        if a_in.len() + v_in.len() != self.net.input_dim() {
            return Err(Error::Shape {
                op: "attention_forward",
                expected: format!("concat input of length {}", self.net.input_dim()),
                got: format!("{} + {}", a_in.len(), v_in.len()),
            });
        }
        let mut x = Vec::with_capacity(a_in.len() + v_in.len());
        x.extend_from_slice(a_in);
        x.extend_from_slice(v_in);
        let (out, mlp) = self.net.forward(&x)?;
        let logit = out[0];
        let alpha = logistic(logit);
        Ok((alpha, AttnCache { mlp, logit, alpha }))
    }

    pub fn alpha(&self, a_in: &[f64], v_in: &[f64]) -> Result<f64> {
        Ok(self.forward(a_in, v_in)?.0)
    }
}
