//! Chamfer distance after one joint Procrustes alignment.
//!
//! The similarity transform is fitted once on the stacked human and object
//! vertices and applied to both meshes, so the relative placement of the
//! two reconstructions still counts: aligning each mesh separately would
//! award a perfect score to a scene whose object drifted away from the
//! body.

use crate::EvalError;
use conrec_geom::{chamfer_cm, procrustes, Similarity};
use nalgebra::Point3;
use serde::{Deserialize, Serialize};

/// Chamfer distances (centimeters) after the shared alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaChamfer {
    pub human_cm: f64,
    pub object_cm: f64,
    /// The fitted prediction-to-ground-truth similarity, for inspection.
    /// Not serialized; reports carry only the distances.
    #[serde(skip, default = "Similarity::identity")]
    pub align: Similarity,
}

/// Fits one similarity over `[pred_human; pred_object]` to
/// `[gt_human; gt_object]` (pointwise correspondence), applies it to both
/// predicted meshes, and measures the Chamfer distance of each against its
/// ground truth.
pub fn joint_pa_chamfer(
    pred_human: &[Point3<f64>],
    pred_object: &[Point3<f64>],
    gt_human: &[Point3<f64>],
    gt_object: &[Point3<f64>],
) -> Result<PaChamfer, EvalError> {
    if pred_human.len() != gt_human.len() {
        return Err(EvalError::Data(format!(
            "human vertex counts differ: prediction {} vs ground truth {}",
            pred_human.len(),
            gt_human.len()
        )));
    }
    if pred_object.len() != gt_object.len() {
        return Err(EvalError::Data(format!(
            "object vertex counts differ: prediction {} vs ground truth {}",
            pred_object.len(),
            gt_object.len()
        )));
    }
    let mut pred: Vec<Point3<f64>> = Vec::with_capacity(pred_human.len() + pred_object.len());
    pred.extend_from_slice(pred_human);
    pred.extend_from_slice(pred_object);
    let mut gt: Vec<Point3<f64>> = Vec::with_capacity(gt_human.len() + gt_object.len());
    gt.extend_from_slice(gt_human);
    gt.extend_from_slice(gt_object);

    let align = procrustes(&pred, &gt)?;
    let human_cm = chamfer_cm(&align.apply(pred_human), gt_human)?;
    let object_cm = chamfer_cm(&align.apply(pred_object), gt_object)?;
    Ok(PaChamfer {
        human_cm,
        object_cm,
        align,
    })
}
