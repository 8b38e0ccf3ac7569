//! Evaluation protocol for the reconstruction pipeline: contact
//! precision/recall, Procrustes-aligned Chamfer distances, dataset-level
//! aggregation into a report, and occlusion-sensitivity maps.
//!
//! Conventions (also embedded in every report):
//! - Contact probabilities binarize at 0.5, inclusive on the high side.
//! - Chamfer distance is `100 * 0.5 * (mean_a min_b |a-b| + mean_b min_a
//!   |b-a|)` centimeters, measured after one similarity alignment fitted on
//!   the stacked human+object vertices and applied to both meshes.
//! - Precision is skipped (not zero) when a prediction marks no vertex,
//!   and recall is skipped when the ground truth marks none; skipped values
//!   are excluded from their aggregate mean.

use std::fmt;
use std::path::PathBuf;

mod chamfer;
mod pr;
mod report;
mod sensitivity;

pub use chamfer::{joint_pa_chamfer, PaChamfer};
pub use pr::{contact_est_pr, contact_rec_pr, pr_from_flags, PrOutcome, CONTACT_BIN_THRESHOLD};
pub use report::{
    aggregate, evaluate_output, evaluate_sample, gt_as_prediction, Aggregate, Conventions,
    EvalReport, SampleEval,
};
pub use sensitivity::{sensitivity_map, write_pgm, SensitivityMap};

#[derive(Debug)]
pub enum EvalError {
    /// Inputs that cannot be evaluated (mismatched lengths, empty sets,
    /// out-of-range windows).
    Data(String),
    Geom(conrec_geom::GeomError),
    Scene(conrec_scene::SceneError),
    Model(conrec_model::ModelError),
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::Data(msg) => write!(f, "cannot evaluate: {msg}"),
            EvalError::Geom(e) => e.fmt(f),
            EvalError::Scene(e) => e.fmt(f),
            EvalError::Model(e) => e.fmt(f),
            EvalError::Io { path, source } => {
                write!(f, "cannot access {}: {source}", path.display())
            }
        }
    }
}

impl std::error::Error for EvalError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            EvalError::Data(_) => None,
            EvalError::Geom(e) => Some(e),
            EvalError::Scene(e) => Some(e),
            EvalError::Model(e) => Some(e),
            EvalError::Io { source, .. } => Some(source),
        }
    }
}

impl From<conrec_geom::GeomError> for EvalError {
    fn from(e: conrec_geom::GeomError) -> EvalError {
        EvalError::Geom(e)
    }
}

impl From<conrec_scene::SceneError> for EvalError {
    fn from(e: conrec_scene::SceneError) -> EvalError {
        EvalError::Scene(e)
    }
}

impl From<conrec_model::ModelError> for EvalError {
    fn from(e: conrec_model::ModelError) -> EvalError {
        EvalError::Model(e)
    }
}
