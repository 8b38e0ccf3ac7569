//! Synthetic dataset generation for joint human–object reconstruction.
//!
//! A scene is a posed articulated human plus a rigidly posed object in front
//! of a pinhole camera. From a scene this crate produces a training sample:
//! a 5-channel raster (inverse depth, per-category shading, and amodal
//! silhouette masks), downsampled ground-truth meshes, and per-vertex contact
//! maps. Datasets of samples round-trip losslessly through a directory
//! layout of JSON metadata plus little-endian `f32` blobs and OBJ meshes.

pub mod contact;
pub mod dataset;
pub mod raster;
pub mod sample;

pub use contact::{label_contact, label_contact_surface, ContactKind, ContactMap, ContactMode};
pub use dataset::{read_dataset, write_dataset, DatasetMeta};
pub use raster::{
    rasterize, CHANNELS, CH_DEPTH, CH_MASK_HUMAN, CH_MASK_OBJECT, CH_SHADE_HUMAN, CH_SHADE_OBJECT,
};
pub use sample::{
    build_sample, generate_samples, sample_scene, ObjectAsset, Sample, Scene, SceneAssets,
    SceneConfig,
};

use conrec_body::BodyError;
use conrec_geom::{obj::ObjError, GeomError};
use std::fmt;
use std::path::PathBuf;

/// Errors from scene generation, rasterization, and dataset I/O.
#[derive(Debug)]
pub enum SceneError {
    Geom(GeomError),
    Body(BodyError),
    Obj { path: PathBuf, source: ObjError },
    /// A configuration value is out of range or inconsistent.
    Config(String),
    /// Contact placement could not produce a touching pose within the
    /// attempt budget.
    ContactPlacement,
    /// Non-contact placement could not satisfy the clearance requirement
    /// within the attempt budget.
    SeparationPlacement,
    /// A posed mesh comes closer to the camera than the 0.1 m clearance.
    CameraClearance { z: f64 },
    Io { path: PathBuf, source: std::io::Error },
    /// Dataset metadata is missing, unparsable, or inconsistent.
    Meta { path: PathBuf, msg: String },
    /// A binary payload has the wrong size or invalid contents.
    Blob { path: PathBuf, msg: String },
}

impl fmt::Display for SceneError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SceneError::Geom(e) => write!(f, "{e}"),
            SceneError::Body(e) => write!(f, "{e}"),
            SceneError::Obj { path, source } => {
                write!(f, "{}: {source}", path.display())
            }
            SceneError::Config(msg) => write!(f, "bad scene config: {msg}"),
            SceneError::ContactPlacement => write!(f, "contact placement failed"),
            SceneError::SeparationPlacement => write!(f, "separation placement failed"),
            SceneError::CameraClearance { z } => {
                write!(f, "mesh too close to the camera: vertex at z = {z} m, need > 0.1 m")
            }
            SceneError::Io { path, source } => {
                write!(f, "cannot access {}: {source}", path.display())
            }
            SceneError::Meta { path, msg } => {
                write!(f, "malformed dataset meta {}: {msg}", path.display())
            }
            SceneError::Blob { path, msg } => {
                write!(f, "bad data file {}: {msg}", path.display())
            }
        }
    }
}

impl std::error::Error for SceneError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            SceneError::Geom(e) => Some(e),
            SceneError::Body(e) => Some(e),
            SceneError::Obj { source, .. } => Some(source),
            SceneError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl From<GeomError> for SceneError {
    fn from(e: GeomError) -> SceneError {
        SceneError::Geom(e)
    }
}

impl From<BodyError> for SceneError {
    fn from(e: BodyError) -> SceneError {
        SceneError::Body(e)
    }
}
