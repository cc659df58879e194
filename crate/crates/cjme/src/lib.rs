//! Joint audio-video-text embedding toolkit for generalized zero-shot
//! classification and cross-modal retrieval.
//!
//! Audio, video and class-text features are projected into a shared
//! embedding space by small MLPs trained with cross-modal triplet losses
//! and an audio-video alignment loss. An optional attention network
//! predicts a per-example modality weight, supervised from the entropy of
//! each modality's class-distance distribution. Inference is nearest-class
//! search with calibrated stacking (an additive penalty on seen-class
//! scores); retrieval is distance ranking in the shared space. A GCCA
//! baseline and a synthetic dataset generator are included.

pub mod cli;
pub mod dataio;
pub mod error;
pub mod evalkit;
pub mod gcca;
pub mod inference;
pub mod numerics;
pub mod objective;
pub mod projector;

pub use error::{Error, Result};
