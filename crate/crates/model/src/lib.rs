//! Joint human–object reconstruction from rendered scenes.
//!
//! One forward pass runs three stages inside a single autodiff graph:
//!
//! 1. **Initial reconstruction** — a small convolutional backbone reads the
//!    five-channel raster; per-joint heatmaps and a soft-argmax give coarse
//!    3D body joints, whose sampled features regress the body parameters,
//!    while pooled features regress the object's 6-DoF pose. Both meshes are
//!    posed in-graph, so everything downstream stays differentiable.
//! 2. **Contact estimation** — per-vertex features (sampled image features
//!    plus the vertex coordinates) cross-attend between the two meshes and a
//!    sigmoid head emits per-vertex contact probabilities.
//! 3. **Contact-masked refinement** — vertex-feature columns below the
//!    contact threshold are zeroed before the cross-attention branch, a
//!    parallel self-attention branch sees the unmasked features, and a
//!    zero-initialized head turns their sum into per-vertex offsets added to
//!    the initial meshes. At initialization refinement is therefore exactly
//!    the identity, and non-contact columns of one mesh can never influence
//!    the other.
//!
//! The mask threshold is hard; its backward treats the mask as a constant.
//! Training minimizes an unweighted (but configurable) sum of contact,
//! vertex, edge-length, parameter, and joint-coordinate losses.

use std::fmt;
use std::path::PathBuf;

pub mod backbone;
pub mod config;
pub mod contact;
pub mod features;
pub mod forward;
pub mod initial;
pub mod loss;
pub mod refine;
pub mod train;

pub use config::{LossWeights, MaskMode, ModelConfig};
pub use forward::{ForwardPass, Model, PipelineOutput};
pub use loss::{build_loss, ground_truth, GroundTruth, LossBreakdown, LossVars};
pub use train::{load_model, train, EmbeddedConfig, EpochStats, TrainConfig, TrainSummary};

use conrec_body::BodyError;
use conrec_scene::SceneError;
use conrec_tensor::checkpoint::CheckpointError;
use conrec_tensor::TensorError;

/// Errors from model construction, the forward pass, and training.
#[derive(Debug)]
pub enum ModelError {
    /// A configuration value is out of range or inconsistent.
    Config(String),
    /// A sample or ground-truth tensor does not fit the model's shapes.
    Data(String),
    Tensor(TensorError),
    Scene(SceneError),
    Body(BodyError),
    Checkpoint(CheckpointError),
    /// A mesh vertex sits at or behind the camera plane, so its image
    /// features cannot be sampled.
    BehindCamera { index: usize, z: f64 },
    /// The training loss became non-finite. Checkpoints already on disk
    /// (at worst the initial one) are the last good state.
    Diverged { epoch: usize, step: u64 },
    Io { path: PathBuf, source: std::io::Error },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::Config(msg) => write!(f, "bad model config: {msg}"),
            ModelError::Data(msg) => write!(f, "bad model input: {msg}"),
            ModelError::Tensor(e) => write!(f, "{e}"),
            ModelError::Scene(e) => write!(f, "{e}"),
            ModelError::Body(e) => write!(f, "{e}"),
            ModelError::Checkpoint(e) => write!(f, "{e}"),
            ModelError::BehindCamera { index, z } => {
                write!(
                    f,
                    "vertex {index} is behind the camera (z = {z} m); cannot sample its features"
                )
            }
            ModelError::Diverged { epoch, step } => {
                write!(
                    f,
                    "training diverged (non-finite loss) at epoch {epoch}, optimizer step {step}; \
                     the most recent checkpoint on disk is the last good state"
                )
            }
            ModelError::Io { path, source } => {
                write!(f, "cannot access {}: {source}", path.display())
            }
        }
    }
}

impl std::error::Error for ModelError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            ModelError::Tensor(e) => Some(e),
            ModelError::Scene(e) => Some(e),
            ModelError::Body(e) => Some(e),
            ModelError::Checkpoint(e) => Some(e),
            ModelError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl From<TensorError> for ModelError {
    fn from(e: TensorError) -> ModelError {
        ModelError::Tensor(e)
    }
}

impl From<SceneError> for ModelError {
    fn from(e: SceneError) -> ModelError {
        ModelError::Scene(e)
    }
}

impl From<BodyError> for ModelError {
    fn from(e: BodyError) -> ModelError {
        ModelError::Body(e)
    }
}

impl From<CheckpointError> for ModelError {
    fn from(e: CheckpointError) -> ModelError {
        ModelError::Checkpoint(e)
    }
}
