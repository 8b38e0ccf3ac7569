use crate::{rodrigues, BodyError, BodyParams, BodyTemplate};
use nalgebra::{Matrix3, Point3, Vector3};

/// Result of posing the template: surface vertices and joint positions, both
/// in world space (root translation already applied).
#[derive(Debug, Clone)]
pub struct PosedBody {
    pub vertices: Vec<Point3<f64>>,
    pub joints: Vec<Point3<f64>>,
}

/// Linear blend skinning.
///
/// Per joint `k` with parent `p`, the world transform is
/// `W_k = W_p * [R_k | j_k - j_p]` (`W_root = [R_0 | j_0]`), so a joint's own
/// rotation moves its descendants but not itself. Vertices follow
/// `v' = sum_k w_vk * W_k * (v - j_k)` plus the root translation.
pub fn lbs_forward(template: &BodyTemplate, params: &BodyParams) -> Result<PosedBody, BodyError> {
    let k = template.joint_count();
    if params.rotations.len() != k {
        return Err(BodyError::WrongParamCount {
            expected: k,
            got: params.rotations.len(),
        });
    }

    let local: Vec<Matrix3<f64>> = params.rotations.iter().map(rodrigues).collect();

    let mut world_r = vec![Matrix3::identity(); k];
    let mut world_t = vec![Vector3::zeros(); k];
    for j in 0..k {
        match template.parents[j] {
            None => {
                world_r[j] = local[j];
                world_t[j] = template.joints[j].coords;
            }
            Some(p) => {
                let offset = template.joints[j] - template.joints[p];
                world_r[j] = world_r[p] * local[j];
                world_t[j] = world_r[p] * offset + world_t[p];
            }
        }
    }

    let joints = (0..k)
        .map(|j| Point3::from(world_t[j] + params.translation))
        .collect();

    // Skinning matrices: A_k v = W_k (v - j_k).
    let skin_t: Vec<Vector3<f64>> = (0..k)
        .map(|j| world_t[j] - world_r[j] * template.joints[j].coords)
        .collect();

    let vertices = template
        .mesh
        .vertices
        .iter()
        .zip(&template.weights)
        .map(|(v, row)| {
            let mut acc = Vector3::zeros();
            for (j, &w) in row.iter().enumerate() {
                if w != 0.0 {
                    acc += w * (world_r[j] * v.coords + skin_t[j]);
                }
            }
            Point3::from(acc + params.translation)
        })
        .collect();

    Ok(PosedBody { vertices, joints })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::{CHEST, HEAD, L_ARM, PELVIS, SPINE};
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn rest_pose_returns_the_template() {
        // Rigidly skinned vertices come back exactly; blended ones pick up
        // at most one rounding per weight term.
        let t = BodyTemplate::default_human();
        let posed = lbs_forward(&t, &BodyParams::zeros(8)).unwrap();
        for ((a, b), row) in posed.vertices.iter().zip(&t.mesh.vertices).zip(&t.weights) {
            if row.iter().filter(|&&w| w != 0.0).count() == 1 {
                assert_eq!(a, b);
            } else {
                assert!((a - b).norm() < 1e-14);
            }
        }
        for (a, b) in posed.joints.iter().zip(&t.joints) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn root_rotation_spins_everything_about_the_pelvis() {
        let t = BodyTemplate::default_human();
        let mut params = BodyParams::zeros(8);
        params.rotations[PELVIS] = nalgebra::Vector3::new(0.0, 0.0, FRAC_PI_2);
        let posed = lbs_forward(&t, &params).unwrap();

        // spine rest (0, 1.15, 0); offset from pelvis (0, 0.2, 0)
        // rotated by Rz(pi/2) becomes (-0.2, 0, 0), so the posed spine sits
        // at (-0.2, 0.95, 0).
        let spine = posed.joints[SPINE];
        assert!((spine - Point3::new(-0.2, 0.95, 0.0)).norm() < 1e-12);

        // The pelvis itself must not move.
        assert!((posed.joints[PELVIS] - t.joints[PELVIS]).norm() < 1e-12);

        // Rigid motion: all edge lengths are preserved.
        let posed_mesh = conrec_geom::Mesh::from_faces(posed.vertices, t.mesh.faces.clone());
        for (a, b) in posed_mesh.edge_lengths().iter().zip(t.mesh.edge_lengths()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn chest_rotation_carries_head_and_shoulders_but_not_legs() {
        let t = BodyTemplate::default_human();
        let mut params = BodyParams::zeros(8);
        params.rotations[CHEST] = nalgebra::Vector3::new(0.0, 0.0, 0.4);
        let posed = lbs_forward(&t, &params).unwrap();

        // head offset from chest is (0, 0.27, 0); rotated by
        // Rz(0.4) it becomes (-0.27 sin 0.4, 0.27 cos 0.4, 0).
        let expect = Point3::new(
            -0.27 * 0.4f64.sin(),
            1.35 + 0.27 * 0.4f64.cos(),
            0.0,
        );
        assert!((posed.joints[HEAD] - expect).norm() < 1e-12);
        assert!((posed.joints[L_ARM] - t.joints[L_ARM]).norm() > 0.05);
        // Legs hang off the pelvis, untouched by the chest.
        for j in [6, 7] {
            assert!((posed.joints[j] - t.joints[j]).norm() < 1e-12);
        }
    }

    #[test]
    fn translation_shifts_vertices_and_joints_uniformly() {
        let t = BodyTemplate::default_human();
        let mut params = BodyParams::zeros(8);
        params.translation = nalgebra::Vector3::new(0.5, -0.25, 3.0);
        let posed = lbs_forward(&t, &params).unwrap();
        for (a, b) in posed.vertices.iter().zip(&t.mesh.vertices) {
            assert!((a - b - params.translation).norm() < 1e-15);
        }
    }

    #[test]
    fn regressed_joints_track_posed_joints_in_any_pose() {
        // The octahedron rings are rigid, so their centroid equals the
        // posed joint no matter the pose.
        let t = BodyTemplate::default_human();
        let mut params = BodyParams::zeros(8);
        for (i, r) in params.rotations.iter_mut().enumerate() {
            let s = i as f64;
            *r = nalgebra::Vector3::new(0.3 * (s + 1.0).sin(), -0.2 * s.cos(), 0.1 * s);
        }
        params.translation = nalgebra::Vector3::new(0.1, 0.2, 2.5);
        let posed = lbs_forward(&t, &params).unwrap();
        let regressed = t.regress_joints(&posed.vertices);
        for (r, j) in regressed.iter().zip(&posed.joints) {
            assert!((r - j).norm() < 1e-12);
        }
    }

    #[test]
    fn wrong_rotation_count_is_rejected() {
        let t = BodyTemplate::default_human();
        let err = lbs_forward(&t, &BodyParams::zeros(5)).unwrap_err();
        assert_eq!(err, BodyError::WrongParamCount { expected: 8, got: 5 });
    }
}
