//! Volumetric data handling: in-memory volume types, on-disk codecs, a
//! minimal NIfTI-1 reader, intensity preprocessing, geometric augmentation,
//! patch sampling, and a synthetic dataset generator for end-to-end runs.
//!
//! Volumes are dense scalar grids over three spatial axes `(H, W, D)` with
//! `D` contiguous in memory, matching the spatial layout of the tensor
//! crate so crops can be copied straight into `[N, C, H, W, D]` buffers.

mod augment;
mod codec;
mod manifest;
mod nifti;
mod preprocess;
mod sampling;
mod synth;
mod volume;

pub use augment::{augment, rotate_image, rotate_label, AugmentConfig};
pub use codec::{load_label, load_volume, save_label, save_volume};
pub use manifest::{CaseEntry, DatasetManifest, Split, MANIFEST_NAME};
pub use nifti::read_nifti;
pub use preprocess::{clip_intensity, percentile, percentile_normalize};
pub use sampling::{foreground_voxels, random_crop, Patch};
pub use synth::{generate_dataset, SynthConfig};
pub use volume::{LabelVolume, Volume};

/// Errors surfaced by volume I/O, preprocessing, and dataset generation.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("volume: {0}")]
    Volume(String),
    #[error("codec: {0}")]
    Codec(String),
    #[error("nifti: {0}")]
    Nifti(String),
    #[error("preprocess: {0}")]
    Preprocess(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("synth: {0}")]
    Synth(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;
