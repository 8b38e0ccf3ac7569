//! Geometry primitives shared across the reconstruction pipeline: triangle
//! meshes, a pinhole camera, point-set distances, similarity alignment, and a
//! small OBJ reader/writer.
//!
//! Everything here operates on `f64`. Conversions to the `f32` used in binary
//! artifacts happen at the serialization boundary, never inside the math.

pub mod align;
pub mod camera;
pub mod dist;
pub mod mesh;
pub mod obj;

pub use align::{procrustes, Similarity};
pub use camera::Camera;
pub use dist::{chamfer_cm, nn_dists};
pub use mesh::Mesh;

use std::fmt;

/// Errors produced by the geometry routines.
#[derive(Debug, Clone, PartialEq)]
pub enum GeomError {
    /// A point with z <= 0 was handed to the projection.
    BehindCamera { index: usize, z: f64 },
    /// Point sets that must correspond pairwise had different lengths.
    LengthMismatch { left: usize, right: usize },
    /// An operation that needs at least `needed` points received `got`.
    TooFewPoints { needed: usize, got: usize },
    /// The source points of an alignment are rank-deficient (collinear or
    /// coincident), so no unique similarity exists.
    DegenerateConfiguration,
    /// An empty point set was passed where at least one point is required.
    EmptySet(&'static str),
}

impl fmt::Display for GeomError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeomError::BehindCamera { index, z } => {
                write!(f, "point behind camera: index {index} has z = {z}")
            }
            GeomError::LengthMismatch { left, right } => {
                write!(f, "point sets must have equal length: {left} vs {right}")
            }
            GeomError::TooFewPoints { needed, got } => {
                write!(f, "need at least {needed} points, got {got}")
            }
            GeomError::DegenerateConfiguration => {
                write!(f, "degenerate configuration: source points are rank-deficient")
            }
            GeomError::EmptySet(what) => write!(f, "empty point set: {what}"),
        }
    }
}

impl std::error::Error for GeomError {}
