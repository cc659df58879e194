//! Dataset and checkpoint serialization, plus a deterministic synthetic
//! dataset generator.
//!
//! A dataset is a directory of five files: `manifest.txt`, `classes.tsv`,
//! `examples.tsv` and the two feature blobs `audio.f32` / `video.f32`
//! (row-major little-endian float32, one row per example, in
//! `examples.tsv` order). Feature values are widened to f64 on load; all
//! model math is f64.

mod checkpoint;
mod dataset;
mod synth;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub(crate) use checkpoint::{
    read_exact_buf, read_f64, read_tensor_raw, read_u32, write_tensor, write_u32,
};
pub use dataset::{
    load_dataset, save_dataset, ClassEntry, DatasetBundle, Dims, Dominance, ExampleRecord,
    SeenFlag, Split,
};
pub use synth::{gen_synthetic, SynthConfig};
