//! Dataset tooling: float image IO, procedural rain synthesis, manifests,
//! and seeded patch sampling.

pub mod dataset;
pub mod image;
pub mod rain;

pub use dataset::{
    load_pair_tensors, make_dataset, sample_batch, DatasetManifest, ManifestEntry, ParamRanges,
    PatchSampler, Split,
};
pub use image::{crop, load_image, pad_reflect, save_image, synthetic_clean, ImageF};
pub use rain::{streak_layer, synth_rain, RainParams};
