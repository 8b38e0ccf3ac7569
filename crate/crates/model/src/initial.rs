//! Initial reconstruction: body parameters from joint-sampled features and
//! object pose from pooled features, both posed inside the graph.
//!
//! The rotation layer and the skinning chain mirror the plain-data versions
//! in `conrec_body` operation for operation, so a zero parameter vector
//! reproduces the rest template exactly.

use crate::backbone::{joint_heatmaps, soft_joints, BackboneOut};
use crate::config::ModelConfig;
use crate::ModelError;
use conrec_body::rodrigues::{rot_coef_a, rot_coef_a_grad, rot_coef_b, rot_coef_b_grad};
use conrec_body::BodyTemplate;
use conrec_geom::Mesh;
use conrec_tensor::store::Binder;
use conrec_tensor::{Graph, Linear, Var};
use nalgebra::Vector3;

/// Axis-angle column `(3, 1)` to a rotation matrix `(3, 3)` via the smooth
/// Rodrigues coefficients, differentiable through zero.
pub fn rotation_matrix(g: &Graph, r: Var) -> Result<Var, ModelError> {
    let s = g.sum(g.mul(r, r)?);
    let a = g.apply(s, rot_coef_a, rot_coef_a_grad);
    let bb = g.apply(s, rot_coef_b, rot_coef_b_grad);
    let x = g.slice_rows(r, 0, 1)?;
    let y = g.slice_rows(r, 1, 2)?;
    let z = g.slice_rows(r, 2, 3)?;
    let zero = g.scale(x, 0.0);
    let row0 = g.concat_cols(&[zero, g.neg(z), y])?;
    let row1 = g.concat_cols(&[z, zero, g.neg(x)])?;
    let row2 = g.concat_cols(&[g.neg(y), x, zero])?;
    let k = g.concat_rows(&[row0, row1, row2])?;
    let k2 = g.matmul(k, k)?;
    let eye = g.input(&[3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    let ak = g.mul_scalar(k, a)?;
    let bk2 = g.mul_scalar(k2, bb)?;
    Ok(g.add(g.add(eye, ak)?, bk2)?)
}

fn const_col(g: &Graph, v: Vector3<f64>) -> Var {
    g.input(&[3, 1], vec![v.x, v.y, v.z])
}

/// In-graph forward kinematics and skinning of the body template.
#[derive(Debug, Clone, Copy)]
pub struct PosedGraph {
    /// All template vertices posed, shape (3, V_full).
    pub vertices: Var,
    /// Posed joint positions, shape (3, K).
    pub joints: Var,
}

/// Poses the template from a flat parameter column `theta` (3K rotations
/// then a 3-vector root translation), exactly as
/// [`conrec_body::lbs_forward`] does on plain data.
pub fn lbs_graph(g: &Graph, template: &BodyTemplate, theta: Var) -> Result<PosedGraph, ModelError> {
    let k = template.joint_count();
    let v_count = template.vertex_count();
    let trans = g.slice_rows(theta, 3 * k, 3 * k + 3)?;

    let mut world_r: Vec<Var> = Vec::with_capacity(k);
    let mut world_t: Vec<Var> = Vec::with_capacity(k);
    for j in 0..k {
        let local = rotation_matrix(g, g.slice_rows(theta, 3 * j, 3 * j + 3)?)?;
        match template.parents[j] {
            None => {
                world_r.push(local);
                world_t.push(const_col(g, template.joints[j].coords));
            }
            Some(p) => {
                let offset = const_col(g, template.joints[j] - template.joints[p]);
                world_r.push(g.matmul(world_r[p], local)?);
                world_t.push(g.add(g.matmul(world_r[p], offset)?, world_t[p])?);
            }
        }
    }

    let joint_cols: Vec<Var> = world_t
        .iter()
        .map(|t| g.add(*t, trans))
        .collect::<Result<_, _>>()?;
    let joints = g.concat_cols(&joint_cols)?;

    // Template vertices as one (3, V) constant.
    let mut flat = vec![0.0; 3 * v_count];
    for (i, v) in template.mesh.vertices.iter().enumerate() {
        flat[i] = v.x;
        flat[v_count + i] = v.y;
        flat[2 * v_count + i] = v.z;
    }
    let rest = g.input(&[3, v_count], flat);

    let mut acc: Option<Var> = None;
    for j in 0..k {
        let jk = const_col(g, template.joints[j].coords);
        let skin_t = g.sub(world_t[j], g.matmul(world_r[j], jk)?)?;
        let moved = g.add_col(g.matmul(world_r[j], rest)?, skin_t)?;
        let weights: Vec<f64> = template.weights.iter().map(|row| row[j]).collect();
        let w_row = g.input(&[1, v_count], weights);
        let term = g.mul_row(moved, w_row)?;
        acc = Some(match acc {
            None => term,
            Some(a) => g.add(a, term)?,
        });
    }
    let vertices = g.add_col(acc.expect("at least one joint"), trans)?;

    Ok(PosedGraph { vertices, joints })
}

/// Outputs of the initial human stage.
#[derive(Debug, Clone, Copy)]
pub struct InitialHuman {
    /// Predicted body parameters (3K rotations + root translation), (3K+3, 1).
    pub theta: Var,
    /// Soft-argmax joints in heatmap units, (3, K).
    pub joints_heatmap: Var,
    /// Posed joints in world space, (3, K).
    pub joints_world: Var,
    /// Downsampled posed mesh, (3, V_h).
    pub mesh: Var,
}

/// Heatmap joints -> sampled joint features -> body parameters -> posed,
/// downsampled mesh. The parameter head starts at zero, so the initial
/// output is the rest template at `base_translation`.
pub fn initial_human(
    b: &mut Binder,
    cfg: &ModelConfig,
    template: &BodyTemplate,
    keep: &[usize],
    bb: &BackboneOut,
    base_translation: Vector3<f64>,
) -> Result<InitialHuman, ModelError> {
    let k = template.joint_count();
    let logits = joint_heatmaps(b, cfg, bb, k)?;
    let joints_heatmap = soft_joints(b, cfg, logits, k)?;

    let g = b.graph();
    // Sample the feature map at each joint's (x, y); feed both the features
    // and the joint coordinates to the head so it sees where it sampled.
    let xy = g.transpose(g.slice_rows(joints_heatmap, 0, 2)?);
    let sampled = g.grid_sample(bb.feat, xy)?;
    let feat_flat = g.reshape(sampled, &[cfg.backbone_channels * k, 1])?;
    let coord_flat = g.reshape(joints_heatmap, &[3 * k, 1])?;
    let head_in = g.concat_rows(&[feat_flat, coord_flat])?;

    let head = Linear::zeroed("init.human.head", (cfg.backbone_channels + 3) * k, 3 * k + 3);
    let raw = head.forward(b, head_in)?;
    let g = b.graph();
    let rot = g.slice_rows(raw, 0, 3 * k)?;
    let trans = g.add(g.slice_rows(raw, 3 * k, 3 * k + 3)?, const_col(g, base_translation))?;
    let theta = g.concat_rows(&[rot, trans])?;

    let posed = lbs_graph(g, template, theta)?;
    let mesh = g.gather_cols(posed.vertices, keep)?;
    Ok(InitialHuman {
        theta,
        joints_heatmap,
        joints_world: posed.joints,
        mesh,
    })
}

/// Outputs of the initial object stage.
#[derive(Debug, Clone, Copy)]
pub struct InitialObject {
    /// Predicted object parameters (axis-angle; translation), (6, 1).
    pub params: Var,
    /// Posed downsampled template, (3, V_o).
    pub mesh: Var,
}

/// Pooled features -> 6-DoF head -> rigidly posed object template. The head
/// starts at zero, so the initial output is the template at
/// `base_translation`.
pub fn initial_object(
    b: &mut Binder,
    cfg: &ModelConfig,
    template: &Mesh,
    bb: &BackboneOut,
    base_translation: Vector3<f64>,
) -> Result<InitialObject, ModelError> {
    let g = b.graph();
    let pooled = g.mean_axis(
        g.reshape(bb.feat, &[cfg.backbone_channels, bb.height * bb.width])?,
        1,
    )?;
    let head = Linear::zeroed("init.object.head", cfg.backbone_channels, 6);
    let raw = head.forward(b, pooled)?;
    let g = b.graph();
    let rot = g.slice_rows(raw, 0, 3)?;
    let trans = g.add(g.slice_rows(raw, 3, 6)?, const_col(g, base_translation))?;
    let params = g.concat_rows(&[rot, trans])?;

    let v_count = template.vertices.len();
    let mut flat = vec![0.0; 3 * v_count];
    for (i, v) in template.vertices.iter().enumerate() {
        flat[i] = v.x;
        flat[v_count + i] = v.y;
        flat[2 * v_count + i] = v.z;
    }
    let rest = g.input(&[3, v_count], flat);
    let r = rotation_matrix(g, rot)?;
    let mesh = g.add_col(g.matmul(r, rest)?, trans)?;
    Ok(InitialObject { params, mesh })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::backbone;
    use conrec_body::{lbs_forward, object_forward, rodrigues, BodyParams, ObjectParams};
    use conrec_scene::SceneAssets;
    use conrec_scene::SceneConfig;
    use conrec_tensor::store::ParamStore;
    use nalgebra::Point3;

    #[test]
    fn rotation_matrix_matches_rodrigues() {
        let g = Graph::new();
        for v in [
            Vector3::new(0.4, -1.1, 0.7),
            Vector3::new(1e-5, -2e-6, 3e-6),
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(2.9, 0.1, -0.4),
        ] {
            let r = g.input(&[3, 1], vec![v.x, v.y, v.z]);
            let m = rotation_matrix(&g, r).unwrap();
            let got = g.values(m);
            let want = rodrigues(&v);
            for i in 0..3 {
                for j in 0..3 {
                    assert!(
                        (got[i * 3 + j] - want[(i, j)]).abs() < 1e-14,
                        "entry ({i},{j}) for {v:?}: {} vs {}",
                        got[i * 3 + j],
                        want[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn zero_axis_angle_is_exactly_identity() {
        let g = Graph::new();
        let r = g.input(&[3, 1], vec![0.0; 3]);
        let m = rotation_matrix(&g, r).unwrap();
        assert_eq!(g.values(m), vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn lbs_graph_matches_plain_lbs_on_a_generic_pose() {
        let template = BodyTemplate::default_human();
        let mut params = BodyParams::zeros(8);
        for (i, r) in params.rotations.iter_mut().enumerate() {
            let s = i as f64;
            *r = Vector3::new(0.3 * (s + 1.0).sin(), -0.2 * s.cos(), 0.1 * s);
        }
        params.translation = Vector3::new(0.1, -0.7, 2.5);
        let plain = lbs_forward(&template, &params).unwrap();

        let g = Graph::new();
        let theta = g.input(&[27, 1], params.to_flat());
        let posed = lbs_graph(&g, &template, theta).unwrap();
        let verts = g.values(posed.vertices);
        let n = template.vertex_count();
        for (i, v) in plain.vertices.iter().enumerate() {
            for (axis, want) in [v.x, v.y, v.z].into_iter().enumerate() {
                let got = verts[axis * n + i];
                assert!((got - want).abs() < 1e-12, "vertex {i} axis {axis}: {got} vs {want}");
            }
        }
        let joints = g.values(posed.joints);
        for (j, p) in plain.joints.iter().enumerate() {
            for (axis, want) in [p.x, p.y, p.z].into_iter().enumerate() {
                assert_eq!(joints[axis * 8 + j], want, "joint {j} axis {axis}");
            }
        }
    }

    #[test]
    fn lbs_graph_at_rest_is_the_template_exactly() {
        let template = BodyTemplate::default_human();
        let g = Graph::new();
        let theta = g.input(&[27, 1], vec![0.0; 27]);
        let posed = lbs_graph(&g, &template, theta).unwrap();
        let verts = g.values(posed.vertices);
        let n = template.vertex_count();
        let plain = lbs_forward(&template, &BodyParams::zeros(8)).unwrap();
        for (i, v) in plain.vertices.iter().enumerate() {
            assert_eq!(verts[i], v.x, "vertex {i} x");
            assert_eq!(verts[n + i], v.y, "vertex {i} y");
            assert_eq!(verts[2 * n + i], v.z, "vertex {i} z");
        }
    }

    fn stage_setup() -> (SceneAssets, ModelConfig, ParamStore, Graph) {
        let assets = SceneAssets::build(&SceneConfig::default()).unwrap();
        (assets, ModelConfig::default(), ParamStore::new(5), Graph::new())
    }

    #[test]
    fn zero_initialized_human_head_yields_rest_template_at_base() {
        let (assets, cfg, mut store, g) = stage_setup();
        let mut b = Binder::new(&mut store, &g);
        let raster = g.input(&[5, 64, 64], vec![0.3; 5 * 64 * 64]);
        let bb = backbone(&mut b, &cfg, raster).unwrap();
        let base = Vector3::new(0.0, -0.95, 3.0);
        let ih = initial_human(&mut b, &cfg, &assets.body, &assets.human_keep, &bb, base).unwrap();

        let theta = g.values(ih.theta);
        assert_eq!(&theta[..24], &[0.0; 24]);
        assert_eq!(&theta[24..], &[0.0, -0.95, 3.0]);

        let mut expect = BodyParams::zeros(8);
        expect.translation = base;
        let posed = lbs_forward(&assets.body, &expect).unwrap();
        let mesh = g.values(ih.mesh);
        let v_h = assets.human_keep.len();
        assert_eq!(g.shape(ih.mesh), vec![3, v_h]);
        for (col, &src) in assets.human_keep.iter().enumerate() {
            let want = posed.vertices[src];
            assert_eq!(mesh[col], want.x, "column {col} x");
            assert_eq!(mesh[v_h + col], want.y, "column {col} y");
            assert_eq!(mesh[2 * v_h + col], want.z, "column {col} z");
        }
    }

    #[test]
    fn zero_initialized_object_head_yields_template_at_base() {
        let (assets, cfg, mut store, g) = stage_setup();
        let mut b = Binder::new(&mut store, &g);
        let raster = g.input(&[5, 64, 64], vec![0.7; 5 * 64 * 64]);
        let bb = backbone(&mut b, &cfg, raster).unwrap();
        let asset = &assets.objects[0];
        let base = Vector3::new(0.0, 0.0, 3.0);
        let io = initial_object(&mut b, &cfg, &asset.down, &bb, base).unwrap();

        assert_eq!(g.values(io.params), vec![0.0, 0.0, 0.0, 0.0, 0.0, 3.0]);
        let n = asset.down.vertices.len();
        assert_eq!(g.shape(io.mesh), vec![3, n]);
        let mesh = g.values(io.mesh);
        let posed = object_forward(
            &asset.down,
            &ObjectParams { rotation: Vector3::zeros(), translation: base },
        );
        for (i, v) in posed.vertices.iter().enumerate() {
            assert_eq!(mesh[i], v.x);
            assert_eq!(mesh[n + i], v.y);
            assert_eq!(mesh[2 * n + i], v.z);
        }
    }

    #[test]
    fn object_stage_applies_a_generic_pose_like_object_forward() {
        // Drive the posing path with a nonzero parameter column directly.
        let (assets, _cfg, _store, g) = stage_setup();
        let asset = &assets.objects[1];
        let params = ObjectParams {
            rotation: Vector3::new(0.3, -0.8, 0.25),
            translation: Vector3::new(0.4, -0.1, 2.2),
        };
        let rot = g.input(&[3, 1], vec![0.3, -0.8, 0.25]);
        let trans = g.input(&[3, 1], vec![0.4, -0.1, 2.2]);
        let n = asset.down.vertices.len();
        let mut flat = vec![0.0; 3 * n];
        for (i, v) in asset.down.vertices.iter().enumerate() {
            flat[i] = v.x;
            flat[n + i] = v.y;
            flat[2 * n + i] = v.z;
        }
        let rest = g.input(&[3, n], flat);
        let r = rotation_matrix(&g, rot).unwrap();
        let mesh = g.add_col(g.matmul(r, rest).unwrap(), trans).unwrap();

        let want = object_forward(&asset.down, &params);
        let got = g.values(mesh);
        for (i, v) in want.vertices.iter().enumerate() {
            for (axis, w) in [v.x, v.y, v.z].into_iter().enumerate() {
                assert!(
                    (got[axis * n + i] - w).abs() < 1e-13,
                    "vertex {i} axis {axis}"
                );
            }
        }
    }

    #[test]
    fn posed_joints_track_plain_forward_kinematics() {
        let template = BodyTemplate::default_human();
        let mut params = BodyParams::zeros(8);
        params.rotations[0] = Vector3::new(0.0, 0.7, 0.0);
        params.rotations[2] = Vector3::new(0.2, 0.0, -0.3);
        params.translation = Vector3::new(-0.2, -1.0, 3.1);
        let plain = lbs_forward(&template, &params).unwrap();

        let g = Graph::new();
        let theta = g.input(&[27, 1], params.to_flat());
        let posed = lbs_graph(&g, &template, theta).unwrap();
        let joints = g.values(posed.joints);
        for (j, p) in plain.joints.iter().enumerate() {
            let got = Point3::new(joints[j], joints[8 + j], joints[16 + j]);
            assert!((got - p).norm() < 1e-12, "joint {j}: {got:?} vs {p:?}");
        }
    }
}
