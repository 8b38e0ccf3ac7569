//! Articulated human body model and rigid object shapes.
//!
//! The human is a procedural skinned template: a fixed rest-pose surface, a
//! small kinematic tree, per-vertex skinning weights, and a joint regressor.
//! Posing is plain linear blend skinning over axis-angle joint rotations.
//! Objects are rigid procedural meshes posed by a single rotation plus
//! translation.
//!
//! This crate is the pure-`f64` reference implementation of the forward
//! kinematics; the differentiable re-implementation inside the model graph is
//! cross-checked against it in tests.

pub mod downsample;
pub mod lbs;
pub mod objects;
pub mod params;
pub mod rodrigues;
pub mod template;

pub use downsample::{downsample_mesh, farthest_point_indices};
pub use lbs::{lbs_forward, PosedBody};
pub use objects::{object_forward, ObjectKind};
pub use params::{BodyParams, ObjectParams};
pub use rodrigues::rodrigues;
pub use template::BodyTemplate;

use std::fmt;

/// Errors from body posing and template handling.
#[derive(Debug, Clone, PartialEq)]
pub enum BodyError {
    /// A parameter vector had the wrong number of entries.
    WrongParamCount { expected: usize, got: usize },
    /// A template failed its structural invariants.
    InvalidTemplate(String),
    /// Downsampling asked for more vertices than the mesh has.
    DownsampleTarget { target: usize, available: usize },
}

impl fmt::Display for BodyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BodyError::WrongParamCount { expected, got } => {
                write!(f, "wrong parameter count: expected {expected}, got {got}")
            }
            BodyError::InvalidTemplate(msg) => write!(f, "invalid template: {msg}"),
            BodyError::DownsampleTarget { target, available } => {
                write!(
                    f,
                    "cannot downsample to {target} vertices, mesh only has {available}"
                )
            }
        }
    }
}

impl std::error::Error for BodyError {}
