//! Per-sample evaluation and dataset-level aggregation into a report.

use crate::chamfer::{joint_pa_chamfer, PaChamfer};
use crate::pr::{contact_est_pr, contact_rec_pr, PrOutcome, CONTACT_BIN_THRESHOLD};
use crate::EvalError;
use conrec_body::ObjectKind;
use conrec_model::{Model, PipelineOutput};
use conrec_scene::Sample;
use conrec_tensor::store::ParamStore;
use serde::{Deserialize, Serialize};

/// Everything measured on one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEval {
    pub index: usize,
    pub seed: u64,
    pub category: ObjectKind,
    pub cd_initial: PaChamfer,
    pub cd_refined: PaChamfer,
    pub contact_est_human: PrOutcome,
    pub contact_est_object: PrOutcome,
    /// Contact derived from the refined geometry, scored on the human side.
    pub contact_rec: PrOutcome,
}

/// Scores one pipeline output against its sample. `tau` is the
/// vertex-to-vertex contact distance (meters) used to derive contact from
/// the refined meshes.
pub fn evaluate_output(
    out: &PipelineOutput,
    sample: &Sample,
    tau: f64,
    index: usize,
) -> Result<SampleEval, EvalError> {
    let cd_initial = joint_pa_chamfer(
        &out.human_initial.vertices,
        &out.object_initial.vertices,
        &sample.human.vertices,
        &sample.object.vertices,
    )?;
    let cd_refined = joint_pa_chamfer(
        &out.human_refined.vertices,
        &out.object_refined.vertices,
        &sample.human.vertices,
        &sample.object.vertices,
    )?;
    Ok(SampleEval {
        index,
        seed: sample.scene.seed,
        category: sample.scene.category,
        cd_initial,
        cd_refined,
        contact_est_human: contact_est_pr(&out.contact_human, &sample.contact_human)?,
        contact_est_object: contact_est_pr(&out.contact_object, &sample.contact_object)?,
        contact_rec: contact_rec_pr(
            &out.human_refined,
            &out.object_refined,
            &sample.contact_human,
            tau,
        )?,
    })
}

/// Runs inference and scores the result. The contact-derivation distance
/// comes from the model's scene configuration, matching how the ground
/// truth was labeled.
pub fn evaluate_sample(
    model: &Model,
    store: &mut ParamStore,
    sample: &Sample,
    index: usize,
) -> Result<SampleEval, EvalError> {
    let out = model.infer(store, sample)?;
    evaluate_output(&out, sample, model.scene_config.contact_threshold, index)
}

/// The ground truth presented as its own prediction: a debugging fixture
/// that must score zero Chamfer distance and perfect derived contact.
pub fn gt_as_prediction(sample: &Sample) -> PipelineOutput {
    PipelineOutput {
        human_initial: sample.human.clone(),
        object_initial: sample.object.clone(),
        human_refined: sample.human.clone(),
        object_refined: sample.object.clone(),
        contact_human: sample.contact_human.clone(),
        contact_object: sample.contact_object.clone(),
        body: sample.scene.body.clone(),
        object: sample.scene.object.clone(),
    }
}

/// Mean precision/recall over the samples where each was measurable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrAggregate {
    pub precision: Option<f64>,
    /// Number of samples whose precision was measurable (not skipped).
    pub precision_samples: usize,
    pub recall: Option<f64>,
    pub recall_samples: usize,
    /// Harmonic mean of the two aggregate values above.
    pub f1: Option<f64>,
}

fn pr_aggregate<F>(samples: &[SampleEval], pick: F) -> PrAggregate
where
    F: Fn(&SampleEval) -> &PrOutcome,
{
    let precisions: Vec<f64> = samples.iter().filter_map(|s| pick(s).precision).collect();
    let recalls: Vec<f64> = samples.iter().filter_map(|s| pick(s).recall).collect();
    let mean = |xs: &[f64]| -> Option<f64> {
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    };
    let precision = mean(&precisions);
    let recall = mean(&recalls);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    PrAggregate {
        precision,
        precision_samples: precisions.len(),
        recall,
        recall_samples: recalls.len(),
        f1,
    }
}

/// Dataset-level means. Chamfer distances average over every sample;
/// precision and recall average only over the samples where they were
/// measurable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub samples: usize,
    pub cd_human_initial_cm: f64,
    pub cd_object_initial_cm: f64,
    pub cd_human_refined_cm: f64,
    pub cd_object_refined_cm: f64,
    pub contact_est_human: PrAggregate,
    pub contact_est_object: PrAggregate,
    pub contact_rec: PrAggregate,
}

pub fn aggregate(samples: &[SampleEval]) -> Result<Aggregate, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::Data(
            "cannot aggregate an empty evaluation".into(),
        ));
    }
    let n = samples.len() as f64;
    let mean = |f: &dyn Fn(&SampleEval) -> f64| samples.iter().map(f).sum::<f64>() / n;
    Ok(Aggregate {
        samples: samples.len(),
        cd_human_initial_cm: mean(&|s| s.cd_initial.human_cm),
        cd_object_initial_cm: mean(&|s| s.cd_initial.object_cm),
        cd_human_refined_cm: mean(&|s| s.cd_refined.human_cm),
        cd_object_refined_cm: mean(&|s| s.cd_refined.object_cm),
        contact_est_human: pr_aggregate(samples, |s| &s.contact_est_human),
        contact_est_object: pr_aggregate(samples, |s| &s.contact_est_object),
        contact_rec: pr_aggregate(samples, |s| &s.contact_rec),
    })
}

/// The measurement conventions, spelled out so a report is
/// self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    /// Contact probabilities binarize at this value, inclusive.
    pub contact_bin_threshold: f64,
    /// Vertex-to-vertex distance (meters) at which reconstructed geometry
    /// counts as touching.
    pub contact_tau_m: f64,
    pub chamfer: String,
    pub alignment: String,
    pub skip_rule: String,
}

impl Conventions {
    pub fn new(tau: f64) -> Conventions {
        Conventions {
            contact_bin_threshold: CONTACT_BIN_THRESHOLD,
            contact_tau_m: tau,
            chamfer: "100 * 0.5 * (mean_a min_b |a-b| + mean_b min_a |b-a|) cm".into(),
            alignment: "one similarity fitted on the stacked human+object vertices, \
                        applied to both meshes"
                .into(),
            skip_rule: "precision skipped when the prediction marks no vertex, recall \
                        skipped when the ground truth marks none; skipped values are \
                        excluded from their aggregate mean"
                .into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub conventions: Conventions,
    pub aggregate: Aggregate,
    pub samples: Vec<SampleEval>,
}

impl EvalReport {
    pub fn new(tau: f64, samples: Vec<SampleEval>) -> Result<EvalReport, EvalError> {
        Ok(EvalReport {
            conventions: Conventions::new(tau),
            aggregate: aggregate(&samples)?,
            samples,
        })
    }
}
