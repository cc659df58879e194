//! Projection networks `g_a`, `g_v`, `g_t`: forward passes, analytic
//! backpropagation, Adam updates, and a finite-difference gradient checker.
//!
//! All networks are small MLPs with relu hidden layers and a linear output
//! layer. Weight matrices are `out x in`; a layer computes `W x + b`.

mod adam;
mod attention;
mod gradcheck;

pub use adam::{adam_step, AdamHyper, AdamState, ModelOptimizer};
pub use attention::{AttentionModel, AttnCache, AttnInputKind};
pub use gradcheck::{
    grad_check, grad_check_normalized, grad_check_projected_attention, GradCheckReport,
};

use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, SeededRng};

/// Layer widths, input first. Hidden layers are relu, the output is linear.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidConfig(
                "MLP needs at least one layer (two widths)".into(),
            ));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidConfig("MLP widths must be positive".into()));
        }
        Ok(MlpSpec { widths })
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: DenseMatrix,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Per-layer pre-activations and activations from a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

/// Parameter gradients, same shapes as the network's layers.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// Scaled-uniform init (±sqrt(6/(fan_in+fan_out))), zero biases.
    pub fn init(spec: &MlpSpec, rng: &mut SeededRng) -> Mlp {
        let mut layers = Vec::new();
        for pair in spec.widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = DenseMatrix::from_fn(fan_out, fan_in, |_, _| {
                (2.0 * rng.uniform01() - 1.0) * limit
            });
            layers.push(Layer {
                w,
                b: vec![0.0; fan_out],
            });
        }
        Mlp { layers }
    }

    pub fn zeros(spec: &MlpSpec) -> Mlp {
        let layers = spec
            .widths
            .windows(2)
            .map(|pair| Layer {
                w: DenseMatrix::zeros(pair[1], pair[0]),
                b: vec![0.0; pair[1]],
            })
            .collect();
        Mlp { layers }
    }

    pub fn spec(&self) -> MlpSpec {
        let mut widths = vec![self.layers[0].w.cols()];
        widths.extend(self.layers.iter().map(|l| l.w.rows()));
        MlpSpec { widths }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                op: "mlp_forward",
                expected: format!("input of length {}", self.input_dim()),
                got: format!("length {}", x.len()),
            });
        }
        let n_layers = self.layers.len();
        let mut pre = Vec::with_capacity(n_layers);
        let mut post = Vec::with_capacity(n_layers);
        let mut act = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.w.matvec(&act)?;
            for (zi, bi) in z.iter_mut().zip(&layer.b) {
                *zi += bi;
            }
            pre.push(z.clone());
            if l + 1 < n_layers {
                for zi in z.iter_mut() {
                    if *zi <= 0.0 {
                        *zi = 0.0;
                    }
                }
            }
            post.push(z.clone());
            act = z;
        }
        Ok((
            act,
            MlpCache {
                input: x.to_vec(),
                pre,
                post,
            },
        ))
    }

    /// Forward pass without keeping the cache.
    pub fn forward_value(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.0)
    }

    pub fn grads_zeros(&self) -> MlpGrads {
        MlpGrads {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    w: DenseMatrix::zeros(l.w.rows(), l.w.cols()),
                    b: vec![0.0; l.b.len()],
                })
                .collect(),
        }
    }

    /// Accumulates parameter gradients into `grads` and returns the
    /// gradient with respect to the input. Relu subgradient at exactly
    /// zero is zero.
    pub fn backward_into(
        &self,
        cache: &MlpCache,
        grad_out: &[f64],
        grads: &mut MlpGrads,
    ) -> Result<Vec<f64>> {
        let n_layers = self.layers.len();
        if grad_out.len() != self.output_dim()
            || cache.pre.len() != n_layers
            || cache.input.len() != self.input_dim()
        {
            return Err(Error::Shape {
                op: "mlp_backward",
                expected: format!("cache/grad for {:?}", self.spec().widths),
                got: format!(
                    "grad len {}, cache layers {}",
                    grad_out.len(),
                    cache.pre.len()
                ),
            });
        }
        let mut dz = grad_out.to_vec();
        for l in (0..n_layers).rev() {
            if l + 1 < n_layers {
                // dz arrived as grad wrt post-activation of hidden layer l.
                for (d, &z) in dz.iter_mut().zip(&cache.pre[l]) {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = if l == 0 {
                &cache.input
            } else {
                &cache.post[l - 1]
            };
            let layer = &self.layers[l];
            let g = &mut grads.layers[l];
            let cols = layer.w.cols();
            for i in 0..layer.w.rows() {
                let di = dz[i];
                g.b[i] += di;
                if di != 0.0 {
                    let row = &mut g.w.data_mut()[i * cols..(i + 1) * cols];
                    for j in 0..cols {
                        row[j] += di * input[j];
                    }
                }
            }
            // Grad wrt this layer's input.
            let mut d_in = vec![0.0; cols];
            for i in 0..layer.w.rows() {
                let di = dz[i];
                if di != 0.0 {
                    let row = layer.w.row(i);
                    for j in 0..cols {
                        d_in[j] += di * row[j];
                    }
                }
            }
            dz = d_in;
        }
        Ok(dz)
    }

    pub fn backward(&self, cache: &MlpCache, grad_out: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
        let mut grads = self.grads_zeros();
        let d_in = self.backward_into(cache, grad_out, &mut grads)?;
        Ok((grads, d_in))
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w.rows() * l.w.cols() + l.b.len())
            .sum()
    }

    /// Flat parameter access, layer by layer, weights before biases.
    pub fn param_mut(&mut self, idx: usize) -> &mut f64 {
        let mut i = idx;
        for l in &mut self.layers {
            let nw = l.w.rows() * l.w.cols();
            if i < nw {
                return &mut l.w.data_mut()[i];
            }
            i -= nw;
            if i < l.b.len() {
                return &mut l.b[i];
            }
            i -= l.b.len();
        }
        panic!("parameter index out of range");
    }
}

impl MlpGrads {
    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.w.data_mut().iter_mut().zip(b.w.data()) {
                *x += y;
            }
            for (x, y) in a.b.iter_mut().zip(&b.b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            for x in l.w.data_mut() {
                *x *= s;
            }
            for x in &mut l.b {
                *x *= s;
            }
        }
    }

    /// Flat view in the same order as [`Mlp::param_mut`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.w.data());
            out.extend_from_slice(&l.b);
        }
        out
    }
}

const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct NormCache {
    normed: Vec<f64>,
    norm: f64,
}

/// l2 normalization with backprop support; the norm is floored to avoid
/// division by zero at the origin.
pub fn normalize(x: &[f64]) -> (Vec<f64>, NormCache) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_FLOOR);
    let normed: Vec<f64> = x.iter().map(|v| v / norm).collect();
    (
        normed.clone(),
        NormCache { normed, norm },
    )
}

pub fn normalize_backward(cache: &NormCache, grad_out: &[f64]) -> Vec<f64> {
    let dot: f64 = grad_out
        .iter()
        .zip(&cache.normed)
        .map(|(g, y)| g * y)
        .sum();
    grad_out
        .iter()
        .zip(&cache.normed)
        .map(|(g, y)| (g - dot * y) / cache.norm)
        .collect()
}

/// The three projection networks. `g_text` is a single linear layer;
/// `g_audio` and `g_video` have one relu hidden layer each. All map into
/// the same embedding dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionModel {
    pub g_audio: Mlp,
    pub g_video: Mlp,
    pub g_text: Mlp,
    /// l2-normalize embeddings before any distance computation.
    pub normalize: bool,
}

impl ProjectionModel {
    pub fn init(
        audio_dim: usize,
        video_dim: usize,
        text_dim: usize,
        embed_dim: usize,
        hidden: usize,
        normalize: bool,
        rng: &mut SeededRng,
    ) -> Result<ProjectionModel> {
        let g_audio = Mlp::init(&MlpSpec::new(vec![audio_dim, hidden, embed_dim])?, rng);
        let g_video = Mlp::init(&MlpSpec::new(vec![video_dim, hidden, embed_dim])?, rng);
        let g_text = Mlp::init(&MlpSpec::new(vec![text_dim, embed_dim])?, rng);
        Ok(ProjectionModel {
            g_audio,
            g_video,
            g_text,
            normalize,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.g_text.output_dim()
    }

    pub fn audio_dim(&self) -> usize {
        self.g_audio.input_dim()
    }

    pub fn video_dim(&self) -> usize {
        self.g_video.input_dim()
    }

    pub fn text_dim(&self) -> usize {
        self.g_text.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.g_audio.layers[0].w.rows()
    }

    /// Shapes must agree on the embedding dimension.
    pub fn validate(&self) -> Result<()> {
        let d = self.g_text.output_dim();
        if self.g_audio.output_dim() != d || self.g_video.output_dim() != d {
            return Err(Error::Checkpoint(format!(
                "projector output dims disagree: text {}, audio {}, video {}",
                d,
                self.g_audio.output_dim(),
                self.g_video.output_dim()
            )));
        }
        Ok(())
    }

    fn finish(&self, v: Vec<f64>) -> Vec<f64> {
        if self.normalize {
            normalize(&v).0
        } else {
            v
        }
    }

    pub fn embed_audio(&self, raw: &[f64]) -> Result<Vec<f64>> {
        Ok(self.finish(self.g_audio.forward_value(raw)?))
    }

    pub fn embed_video(&self, raw: &[f64]) -> Result<Vec<f64>> {
        Ok(self.finish(self.g_video.forward_value(raw)?))
    }

    pub fn embed_text(&self, raw: &[f64]) -> Result<Vec<f64>> {
        Ok(self.finish(self.g_text.forward_value(raw)?))
    }
}
