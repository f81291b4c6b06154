use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error("image decode error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("out-of-bounds point in {image_id} at index {index}: ({x}, {y}) outside [0, {width}) x [0, {height})")]
    OutOfBoundsPoint {
        image_id: String,
        index: usize,
        x: f32,
        y: f32,
        width: u32,
        height: u32,
    },

    #[error("infeasible synthesis config: {0}")]
    InfeasibleSynth(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("map dimensions {h}x{w} not divisible by pooling factor {factor}; pad first")]
    NonDivisible { h: usize, w: usize, factor: usize },

    #[error("input {h}x{w} not divisible by {multiple}; apply pad_to_stride first")]
    InputNotPadded { h: usize, w: usize, multiple: usize },

    #[error("image {image_id} is {h}x{w}, smaller than patch size {patch}")]
    ImageTooSmall {
        image_id: String,
        h: usize,
        w: usize,
        patch: usize,
    },

    #[error("weight file incompatible with network spec; mismatched layers: {}", .0.join(", "))]
    CheckpointMismatch(Vec<String>),

    #[error("malformed raster file {path}: {reason}")]
    Raster { path: PathBuf, reason: String },

    #[error("checkpoint error on {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {term}")]
    Diverged {
        epoch: usize,
        batch: usize,
        term: String,
    },

    #[error("empty input: {0}")]
    Empty(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
