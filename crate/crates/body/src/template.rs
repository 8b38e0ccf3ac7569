use crate::BodyError;
use conrec_geom::Mesh;
use nalgebra::{Point3, Vector3};

/// The articulated rest-pose body: surface mesh, kinematic tree, skinning
/// weights, and a joint regressor.
///
/// Invariants (checked by [`BodyTemplate::validate`]):
/// * joint 0 is the root and every parent index precedes its child,
/// * every skinning-weight row is nonnegative and sums to 1,
/// * every regressor row is nonnegative and sums to 1.
#[derive(Debug, Clone)]
pub struct BodyTemplate {
    pub mesh: Mesh,
    pub joints: Vec<Point3<f64>>,
    pub parents: Vec<Option<usize>>,
    pub joint_names: Vec<&'static str>,
    /// `V x K`: how much each vertex follows each joint.
    pub weights: Vec<Vec<f64>>,
    /// `K x V`: joint positions as convex combinations of surface vertices.
    pub regressor: Vec<Vec<f64>>,
}

impl BodyTemplate {
    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.mesh.vertices.len()
    }

    /// Checks the structural invariants listed on the type.
    pub fn validate(&self) -> Result<(), BodyError> {
        let k = self.joints.len();
        let v = self.mesh.vertices.len();
        if k == 0 || v == 0 {
            return Err(BodyError::InvalidTemplate("empty template".into()));
        }
        if self.parents.len() != k || self.joint_names.len() != k {
            return Err(BodyError::InvalidTemplate(
                "joints, parents, and names must have equal length".into(),
            ));
        }
        if self.parents[0].is_some() {
            return Err(BodyError::InvalidTemplate("joint 0 must be the root".into()));
        }
        for (j, p) in self.parents.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < j => {}
                Some(p) => {
                    return Err(BodyError::InvalidTemplate(format!(
                        "joint {j} has parent {p}, which does not precede it"
                    )))
                }
                None => {
                    return Err(BodyError::InvalidTemplate(format!(
                        "joint {j} has no parent but is not the root"
                    )))
                }
            }
        }
        if self.weights.len() != v {
            return Err(BodyError::InvalidTemplate(format!(
                "expected {v} weight rows, got {}",
                self.weights.len()
            )));
        }
        for (i, row) in self.weights.iter().enumerate() {
            if row.len() != k {
                return Err(BodyError::InvalidTemplate(format!(
                    "weight row {i} has length {}, expected {k}",
                    row.len()
                )));
            }
            check_convex_row(row, &format!("weight row {i}"))?;
        }
        if self.regressor.len() != k {
            return Err(BodyError::InvalidTemplate(format!(
                "expected {k} regressor rows, got {}",
                self.regressor.len()
            )));
        }
        for (j, row) in self.regressor.iter().enumerate() {
            if row.len() != v {
                return Err(BodyError::InvalidTemplate(format!(
                    "regressor row {j} has length {}, expected {v}",
                    row.len()
                )));
            }
            check_convex_row(row, &format!("regressor row {j}"))?;
        }
        for face in &self.mesh.faces {
            if face.iter().any(|&i| i >= v) {
                return Err(BodyError::InvalidTemplate("face index out of range".into()));
            }
        }
        Ok(())
    }

    /// Joint positions recovered from arbitrary vertex positions via the
    /// regressor. On the rest mesh this reproduces `joints` exactly.
    pub fn regress_joints(&self, vertices: &[Point3<f64>]) -> Vec<Point3<f64>> {
        self.regressor
            .iter()
            .map(|row| {
                let mut acc = Vector3::zeros();
                for (w, p) in row.iter().zip(vertices) {
                    if *w != 0.0 {
                        acc += *w * p.coords;
                    }
                }
                Point3::from(acc)
            })
            .collect()
    }

    /// The built-in humanoid: 8 joints, 233 vertices.
    ///
    /// The surface is a union of hexagonal tubes along the bones, one small
    /// octahedron around each joint, and capped tube extensions for the head,
    /// forearms, and lower legs. Each joint's regressor row averages that
    /// joint's six octahedron vertices, whose centroid is the joint exactly —
    /// in every pose, since they are rigidly skinned to it.
    pub fn default_human() -> BodyTemplate {
        let t = build_default_human();
        t.validate().expect("built-in template must be valid");
        t
    }
}

fn check_convex_row(row: &[f64], what: &str) -> Result<(), BodyError> {
    let mut sum = 0.0;
    for &w in row {
        if !(w >= 0.0) {
            return Err(BodyError::InvalidTemplate(format!(
                "{what} has negative entry {w}"
            )));
        }
        sum += w;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(BodyError::InvalidTemplate(format!(
            "{what} sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

const RING: usize = 6;

struct Builder {
    k: usize,
    vertices: Vec<Point3<f64>>,
    faces: Vec<[usize; 3]>,
    weights: Vec<Vec<f64>>,
    /// Per joint: the indices of its octahedron vertices.
    octa_verts: Vec<Vec<usize>>,
}

impl Builder {
    fn new(k: usize) -> Builder {
        Builder {
            k,
            vertices: Vec::new(),
            faces: Vec::new(),
            weights: Vec::new(),
            octa_verts: vec![Vec::new(); k],
        }
    }

    fn weight_row(&self, parts: &[(usize, f64)]) -> Vec<f64> {
        let mut row = vec![0.0; self.k];
        for &(j, w) in parts {
            row[j] += w;
        }
        row
    }

    /// Six vertices around `center` in the plane orthogonal to `axis`.
    /// Returns the index of the first.
    fn push_ring(
        &mut self,
        center: Point3<f64>,
        axis: Vector3<f64>,
        radius: f64,
        weight: &[(usize, f64)],
    ) -> usize {
        let start = self.vertices.len();
        let (u, v) = ring_frame(&axis);
        for i in 0..RING {
            let theta = i as f64 * std::f64::consts::PI / 3.0;
            let offset = radius * (theta.cos() * u + theta.sin() * v);
            self.vertices.push(center + offset);
            self.weights.push(self.weight_row(weight));
        }
        start
    }

    /// Triangle strip between two rings pushed with the same frame.
    fn strip(&mut self, a: usize, b: usize) {
        for i in 0..RING {
            let j = (i + 1) % RING;
            self.faces.push([a + i, b + i, b + j]);
            self.faces.push([a + i, b + j, a + j]);
        }
    }

    /// Fan closing a ring onto an apex vertex.
    fn cap(&mut self, ring: usize, apex: Point3<f64>, weight: &[(usize, f64)]) {
        let tip = self.vertices.len();
        self.vertices.push(apex);
        self.weights.push(self.weight_row(weight));
        for i in 0..RING {
            let j = (i + 1) % RING;
            self.faces.push([ring + i, ring + j, tip]);
        }
    }

    /// A small octahedron rigidly attached to joint `joint`.
    fn push_octahedron(&mut self, joint: usize, center: Point3<f64>, r: f64) {
        let start = self.vertices.len();
        let offsets = [
            Vector3::new(r, 0.0, 0.0),
            Vector3::new(-r, 0.0, 0.0),
            Vector3::new(0.0, r, 0.0),
            Vector3::new(0.0, -r, 0.0),
            Vector3::new(0.0, 0.0, r),
            Vector3::new(0.0, 0.0, -r),
        ];
        for off in offsets {
            self.vertices.push(center + off);
            self.weights.push(self.weight_row(&[(joint, 1.0)]));
            self.octa_verts[joint].push(self.vertices.len() - 1);
        }
        let [px, nx, py, ny, pz, nz] =
            [start, start + 1, start + 2, start + 3, start + 4, start + 5];
        self.faces.extend_from_slice(&[
            [px, py, pz],
            [py, nx, pz],
            [nx, ny, pz],
            [ny, px, pz],
            [py, px, nz],
            [nx, py, nz],
            [ny, nx, nz],
            [px, ny, nz],
        ]);
    }

    /// Tube between two points: rings at the given `(t, radius)` stations,
    /// strips between consecutive rings, optionally capped at the far end.
    /// `weight_of(t)` gives the skinning assignment per station.
    fn push_tube(
        &mut self,
        from: Point3<f64>,
        to: Point3<f64>,
        stations: &[(f64, f64)],
        cap_end: bool,
        weight_of: impl Fn(f64) -> Vec<(usize, f64)>,
    ) {
        let axis = (to - from).normalize();
        let mut prev: Option<usize> = None;
        for &(t, r) in stations {
            let center = from + t * (to - from);
            let ring = self.push_ring(center, axis, r, &weight_of(t));
            if let Some(p) = prev {
                self.strip(p, ring);
            }
            prev = Some(ring);
        }
        if cap_end {
            let last_t = stations.last().expect("tube needs stations").0;
            self.cap(prev.unwrap(), to, &weight_of(last_t));
        }
    }
}

fn ring_frame(axis: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let up = if axis.y.abs() < 0.9 {
        Vector3::y()
    } else {
        Vector3::x()
    };
    let u = up.cross(axis).normalize();
    let v = axis.cross(&u);
    (u, v)
}

// Joint indices of the built-in humanoid.
pub const PELVIS: usize = 0;
pub const SPINE: usize = 1;
pub const CHEST: usize = 2;
pub const HEAD: usize = 3;
pub const L_ARM: usize = 4;
pub const R_ARM: usize = 5;
pub const L_LEG: usize = 6;
pub const R_LEG: usize = 7;

fn build_default_human() -> BodyTemplate {
    let joints = vec![
        Point3::new(0.0, 0.95, 0.0),   // pelvis
        Point3::new(0.0, 1.15, 0.0),   // spine
        Point3::new(0.0, 1.35, 0.0),   // chest
        Point3::new(0.0, 1.62, 0.0),   // head
        Point3::new(0.22, 1.42, 0.0),  // left shoulder
        Point3::new(-0.22, 1.42, 0.0), // right shoulder
        Point3::new(0.10, 0.85, 0.0),  // left hip
        Point3::new(-0.10, 0.85, 0.0), // right hip
    ];
    let parents = vec![
        None,
        Some(PELVIS),
        Some(SPINE),
        Some(CHEST),
        Some(CHEST),
        Some(CHEST),
        Some(PELVIS),
        Some(PELVIS),
    ];
    let joint_names = vec![
        "pelvis", "spine", "chest", "head", "l_arm", "r_arm", "l_leg", "r_leg",
    ];

    let mut b = Builder::new(joints.len());

    // Joint octahedra (these carry the regressor).
    let octa_radius = [0.13, 0.12, 0.13, 0.10, 0.06, 0.06, 0.09, 0.09];
    for (j, &r) in octa_radius.iter().enumerate() {
        b.push_octahedron(j, joints[j], r);
    }

    // Bone tubes blend between their two endpoint joints.
    let bones: [(usize, usize, f64, f64); 7] = [
        (PELVIS, SPINE, 0.12, 0.12),
        (SPINE, CHEST, 0.12, 0.12),
        (CHEST, HEAD, 0.05, 0.06),
        (CHEST, L_ARM, 0.07, 0.05),
        (CHEST, R_ARM, 0.07, 0.05),
        (PELVIS, L_LEG, 0.10, 0.08),
        (PELVIS, R_LEG, 0.10, 0.08),
    ];
    for &(pj, cj, r0, r1) in &bones {
        let stations = [
            (1.0 / 3.0, r0 + (r1 - r0) / 3.0),
            (2.0 / 3.0, r0 + 2.0 * (r1 - r0) / 3.0),
        ];
        b.push_tube(joints[pj], joints[cj], &stations, false, |t| {
            vec![(pj, 1.0 - t), (cj, t)]
        });
    }

    // Rigid extensions past the last joint of each chain.
    let crown = Point3::new(0.0, 1.80, 0.0);
    b.push_tube(
        joints[HEAD],
        crown,
        &[(0.35, 0.085), (0.75, 0.075)],
        true,
        |_| vec![(HEAD, 1.0)],
    );
    for (shoulder, wrist) in [
        (L_ARM, Point3::new(0.27, 1.02, 0.0)),
        (R_ARM, Point3::new(-0.27, 1.02, 0.0)),
    ] {
        b.push_tube(
            joints[shoulder],
            wrist,
            &[(0.3, 0.045), (0.6, 0.042), (0.9, 0.038)],
            true,
            |_| vec![(shoulder, 1.0)],
        );
    }
    for (hip, ankle) in [
        (L_LEG, Point3::new(0.10, 0.08, 0.0)),
        (R_LEG, Point3::new(-0.10, 0.08, 0.0)),
    ] {
        b.push_tube(
            joints[hip],
            ankle,
            &[(0.25, 0.065), (0.5, 0.06), (0.75, 0.052), (0.95, 0.046)],
            true,
            |_| vec![(hip, 1.0)],
        );
    }

    // Regressor: average of each joint's octahedron ring.
    let v = b.vertices.len();
    let regressor = b
        .octa_verts
        .iter()
        .map(|ids| {
            let mut row = vec![0.0; v];
            for &i in ids {
                row[i] = 1.0 / ids.len() as f64;
            }
            row
        })
        .collect();

    BodyTemplate {
        mesh: Mesh::from_faces(b.vertices, b.faces),
        joints,
        parents,
        joint_names,
        weights: b.weights,
        regressor,
    }
}
