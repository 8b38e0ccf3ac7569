//! Training targets and the five-term loss.
//!
//! [`ground_truth`] freezes everything a sample's loss needs into plain
//! buffers; [`build_loss`] turns one forward pass plus those buffers into a
//! scalar loss node. The unweighted terms stay accessible for logging.

use crate::features::{project_rows, HeatmapScale};
use crate::forward::{ForwardPass, Model};
use crate::ModelError;
use conrec_body::lbs_forward;
use conrec_geom::{Camera, Mesh};
use conrec_scene::Sample;
use conrec_tensor::{Graph, Var};

/// Clamp epsilon for the binary cross-entropy probabilities.
pub const BCE_EPS: f64 = 1e-7;

/// Floor for squared edge lengths before the square root, keeping the
/// gradient finite on (numerically) collapsed edges.
const EDGE_EPS: f64 = 1e-12;

/// Per-sample targets, flattened to the layouts the graph uses.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub contact_human: Vec<f64>,
    pub contact_object: Vec<f64>,
    /// Posed mesh vertices, row-major `(3, V)`.
    pub vertices_human: Vec<f64>,
    pub vertices_object: Vec<f64>,
    pub edges_human: Vec<[usize; 2]>,
    pub edges_object: Vec<[usize; 2]>,
    pub edge_lengths_human: Vec<f64>,
    pub edge_lengths_object: Vec<f64>,
    /// Body parameters (3K rotations, then translation).
    pub theta: Vec<f64>,
    /// Object parameters (axis-angle, then translation).
    pub object_params: Vec<f64>,
    /// Joint targets in heatmap units, row-major `(3, K)`.
    pub joints_heatmap: Vec<f64>,
    /// Joint targets in image pixels, row-major `(2, K)`.
    pub joints_image: Vec<f64>,
    pub camera: Camera,
}

fn mesh_rows(m: &Mesh) -> Vec<f64> {
    let n = m.vertices.len();
    let mut flat = vec![0.0; 3 * n];
    for (i, v) in m.vertices.iter().enumerate() {
        flat[i] = v.x;
        flat[n + i] = v.y;
        flat[2 * n + i] = v.z;
    }
    flat
}

/// The depth bin (continuous) a camera-space depth falls into.
pub fn depth_bin(z: f64, z_min: f64, z_max: f64, bins: usize) -> f64 {
    ((z - z_min) / (z_max - z_min)).clamp(0.0, 1.0) * (bins - 1) as f64
}

/// Extracts every target [`build_loss`] needs from one sample.
pub fn ground_truth(model: &Model, sample: &Sample) -> Result<GroundTruth, ModelError> {
    let asset = model.assets.object_asset(&sample.scene.category)?;
    let v_h = model.assets.human_keep.len();
    let v_o = asset.down.vertices.len();
    if sample.contact_human.len() != v_h {
        return Err(ModelError::Data(format!(
            "contact_human has {} entries, the downsampled human has {v_h} vertices",
            sample.contact_human.len()
        )));
    }
    if sample.contact_object.len() != v_o {
        return Err(ModelError::Data(format!(
            "contact_object has {} entries, the downsampled object has {v_o} vertices",
            sample.contact_object.len()
        )));
    }
    if sample.human.vertices.len() != v_h || sample.object.vertices.len() != v_o {
        return Err(ModelError::Data(format!(
            "sample meshes have {} / {} vertices, assets expect {v_h} / {v_o}",
            sample.human.vertices.len(),
            sample.object.vertices.len()
        )));
    }

    let posed = lbs_forward(&model.assets.body, &sample.scene.body)?;
    let k = posed.joints.len();
    let cfg = &model.config;
    let hm_h = crate::backbone::backbone_extent(model.scene_config.raster_height)
        .expect("validated in Model::new");
    let hm_w = crate::backbone::backbone_extent(model.scene_config.raster_width)
        .expect("validated in Model::new");
    let scale = HeatmapScale::new(
        (model.scene_config.raster_height, model.scene_config.raster_width),
        (hm_h, hm_w),
    );
    let camera = sample.scene.camera;
    let mut joints_heatmap = vec![0.0; 3 * k];
    let mut joints_image = vec![0.0; 2 * k];
    for (j, p) in posed.joints.iter().enumerate() {
        if p.z <= 0.0 {
            return Err(ModelError::BehindCamera { index: j, z: p.z });
        }
        let uv = camera
            .project_point(p)
            .map_err(|_| ModelError::BehindCamera { index: j, z: p.z })?;
        joints_image[j] = uv[0];
        joints_image[k + j] = uv[1];
        joints_heatmap[j] = scale.map_x(uv[0]);
        joints_heatmap[k + j] = scale.map_y(uv[1]);
        joints_heatmap[2 * k + j] = depth_bin(p.z, cfg.z_min, cfg.z_max, cfg.depth_bins);
    }

    Ok(GroundTruth {
        contact_human: sample.contact_human.values.clone(),
        contact_object: sample.contact_object.values.clone(),
        vertices_human: mesh_rows(&sample.human),
        vertices_object: mesh_rows(&sample.object),
        edges_human: sample.human.edges.clone(),
        edges_object: sample.object.edges.clone(),
        edge_lengths_human: sample.human.edge_lengths(),
        edge_lengths_object: sample.object.edge_lengths(),
        theta: sample.scene.body.to_flat(),
        object_params: sample.scene.object.to_flat(),
        joints_heatmap,
        joints_image,
        camera,
    })
}

/// Graph nodes for the total loss and its unweighted terms, all `(1, 1)`.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub contact: Var,
    pub vertex: Var,
    pub edge: Var,
    pub param: Var,
    pub coord: Var,
}

/// Plain numbers read out of a [`LossVars`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub contact: f64,
    pub vertex: f64,
    pub edge: f64,
    pub param: f64,
    pub coord: f64,
}

impl LossVars {
    pub fn breakdown(&self, g: &Graph) -> LossBreakdown {
        LossBreakdown {
            total: g.scalar(self.total),
            contact: g.scalar(self.contact),
            vertex: g.scalar(self.vertex),
            edge: g.scalar(self.edge),
            param: g.scalar(self.param),
            coord: g.scalar(self.coord),
        }
    }
}

fn bce(g: &Graph, pred: Var, target: Var) -> Result<Var, ModelError> {
    let p = g.clamp(pred, BCE_EPS, 1.0 - BCE_EPS);
    let not_p = g.add_scalar(g.neg(p), 1.0);
    let not_y = g.add_scalar(g.neg(target), 1.0);
    let ll = g.add(g.mul(target, g.ln(p))?, g.mul(not_y, g.ln(not_p))?)?;
    Ok(g.neg(g.mean(ll)))
}

fn graph_edge_lengths(g: &Graph, mesh: Var, edges: &[[usize; 2]]) -> Result<Var, ModelError> {
    let ia: Vec<usize> = edges.iter().map(|e| e[0]).collect();
    let ib: Vec<usize> = edges.iter().map(|e| e[1]).collect();
    let d = g.sub(g.gather_cols(mesh, &ia)?, g.gather_cols(mesh, &ib)?)?;
    let ss = g.sum_axis(g.mul(d, d)?, 0)?;
    Ok(g.sqrt(g.clamp(ss, EDGE_EPS, f64::INFINITY)))
}

fn mean_abs_diff(g: &Graph, a: Var, b: Var) -> Result<Var, ModelError> {
    Ok(g.mean(g.abs(g.sub(a, b)?)))
}

/// Assembles the five-term loss for one forward pass.
///
/// * contact: binary cross-entropy over both contact rows;
/// * vertex: mean absolute error over both refined meshes' coordinates;
/// * edge: mean absolute edge-length error over both refined meshes;
/// * param: mean absolute error over body and object parameters;
/// * coord: mean absolute joint error, heatmap units plus image pixels.
///
/// `total` is the weighted sum; the terms themselves stay unweighted.
pub fn build_loss(
    g: &Graph,
    fp: &ForwardPass,
    gt: &GroundTruth,
    weights: &crate::config::LossWeights,
) -> Result<LossVars, ModelError> {
    let v_h = gt.contact_human.len();
    let v_o = gt.contact_object.len();
    let pred_contact = g.concat_cols(&[fp.contact_human, fp.contact_object])?;
    let target_rows: Vec<f64> = gt
        .contact_human
        .iter()
        .chain(&gt.contact_object)
        .copied()
        .collect();
    let target = g.input(&[1, v_h + v_o], target_rows);
    let contact = bce(g, pred_contact, target)?;

    let pred_verts = g.concat_cols(&[fp.refined_human, fp.refined_object])?;
    let gt_h = g.input(&[3, v_h], gt.vertices_human.clone());
    let gt_o = g.input(&[3, v_o], gt.vertices_object.clone());
    let gt_verts = g.concat_cols(&[gt_h, gt_o])?;
    let vertex = mean_abs_diff(g, pred_verts, gt_verts)?;

    let len_h = graph_edge_lengths(g, fp.refined_human, &gt.edges_human)?;
    let len_o = graph_edge_lengths(g, fp.refined_object, &gt.edges_object)?;
    let pred_len = g.concat_cols(&[len_h, len_o])?;
    let gt_len_rows: Vec<f64> = gt
        .edge_lengths_human
        .iter()
        .chain(&gt.edge_lengths_object)
        .copied()
        .collect();
    let gt_len = g.input(&[1, gt_len_rows.len()], gt_len_rows);
    let edge = mean_abs_diff(g, pred_len, gt_len)?;

    let pred_params = g.concat_rows(&[fp.theta, fp.object_params])?;
    let gt_param_col: Vec<f64> = gt.theta.iter().chain(&gt.object_params).copied().collect();
    let gt_params = g.input(&[gt_param_col.len(), 1], gt_param_col);
    let param = mean_abs_diff(g, pred_params, gt_params)?;

    let k = gt.joints_heatmap.len() / 3;
    let gt_hm = g.input(&[3, k], gt.joints_heatmap.clone());
    let hm_term = mean_abs_diff(g, fp.joints_heatmap, gt_hm)?;
    let proj = project_rows(g, fp.joints_world, &gt.camera)?;
    let gt_px = g.input(&[2, k], gt.joints_image.clone());
    let px_term = mean_abs_diff(g, proj, gt_px)?;
    let coord = g.add(hm_term, px_term)?;

    let total = [
        (contact, weights.contact),
        (vertex, weights.vertex),
        (edge, weights.edge),
        (param, weights.param),
        (coord, weights.coord),
    ]
    .into_iter()
    .map(|(term, w)| g.scale(term, w))
    .try_fold(None::<Var>, |acc, term| -> Result<Option<Var>, ModelError> {
        Ok(Some(match acc {
            None => term,
            Some(a) => g.add(a, term)?,
        }))
    })?
    .expect("five terms");

    Ok(LossVars {
        total,
        contact,
        vertex,
        edge,
        param,
        coord,
    })
}
