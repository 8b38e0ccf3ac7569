//! Precision/recall for per-vertex contact, with explicit skip conventions
//! for the empty cases instead of silent zeros.

use crate::EvalError;
use conrec_geom::Mesh;
use conrec_scene::{label_contact, ContactMap};
use serde::{Deserialize, Serialize};

/// Threshold at which contact probabilities binarize (inclusive).
pub const CONTACT_BIN_THRESHOLD: f64 = 0.5;

/// Precision/recall with the raw confusion counts they came from.
///
/// `precision` is `None` when the prediction marks no vertex (there is
/// nothing to be precise about), and `recall` is `None` when the ground
/// truth marks none. Callers aggregate by averaging only the present
/// values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrOutcome {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub true_positives: usize,
    pub predicted_positives: usize,
    pub actual_positives: usize,
}

impl PrOutcome {
    /// Harmonic mean of precision and recall; `None` when either side is
    /// skipped, zero when both are present but zero.
    pub fn f1(&self) -> Option<f64> {
        let (p, r) = (self.precision?, self.recall?);
        if p + r == 0.0 {
            Some(0.0)
        } else {
            Some(2.0 * p * r / (p + r))
        }
    }
}

/// Confusion counts over two flag vectors of equal length.
pub fn pr_from_flags(pred: &[bool], gt: &[bool]) -> Result<PrOutcome, EvalError> {
    if pred.len() != gt.len() {
        return Err(EvalError::Data(format!(
            "contact flag lengths differ: prediction {} vs ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    let tp = pred.iter().zip(gt).filter(|(&p, &g)| p && g).count();
    let pp = pred.iter().filter(|&&p| p).count();
    let ap = gt.iter().filter(|&&g| g).count();
    Ok(PrOutcome {
        precision: (pp > 0).then(|| tp as f64 / pp as f64),
        recall: (ap > 0).then(|| tp as f64 / ap as f64),
        true_positives: tp,
        predicted_positives: pp,
        actual_positives: ap,
    })
}

/// Precision/recall of an estimated contact map against the ground-truth
/// map, both binarized at [`CONTACT_BIN_THRESHOLD`].
pub fn contact_est_pr(pred: &ContactMap, gt: &ContactMap) -> Result<PrOutcome, EvalError> {
    pr_from_flags(
        &pred.binarized(CONTACT_BIN_THRESHOLD),
        &gt.binarized(CONTACT_BIN_THRESHOLD),
    )
}

/// Contact carried by the reconstructed geometry itself: human vertices
/// within `tau` meters of the reconstructed object are relabeled as contact
/// and scored against the ground-truth human contact map.
pub fn contact_rec_pr(
    recon_human: &Mesh,
    recon_object: &Mesh,
    gt_human: &ContactMap,
    tau: f64,
) -> Result<PrOutcome, EvalError> {
    let (derived, _) = label_contact(recon_human, recon_object, tau)?;
    contact_est_pr(&derived, gt_human)
}
