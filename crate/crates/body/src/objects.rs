use crate::{rodrigues, ObjectParams};
use conrec_geom::Mesh;
use nalgebra::Point3;
use std::collections::BTreeMap;
use std::f64::consts::TAU;

/// Procedural rigid object shapes. Dimensions are in meters; every mesh is
/// centered on the origin in its canonical pose.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum ObjectKind {
    /// Axis-aligned box with full extents `w`, `h`, `d`.
    Box { w: f64, h: f64, d: f64 },
    /// Upright cylinder (axis = y) of radius `r` and height `h`.
    Cylinder { r: f64, h: f64 },
    /// Sphere of radius `r`.
    Ball { r: f64 },
}

impl ObjectKind {
    /// The canonical template mesh for this shape. Resolutions are fixed so
    /// every template has a stable vertex count (box 98, cylinder 86,
    /// ball 86) comfortably above the downsampling targets in use.
    pub fn mesh(&self) -> Mesh {
        match *self {
            ObjectKind::Box { w, h, d } => box_mesh(w, h, d, 4),
            ObjectKind::Cylinder { r, h } => cylinder_mesh(r, h, 12, 7),
            ObjectKind::Ball { r } => sphere_mesh(r, 12, 8),
        }
    }

    /// Stable name used in serialized scene parameters.
    pub fn name(&self) -> &'static str {
        match self {
            ObjectKind::Box { .. } => "box",
            ObjectKind::Cylinder { .. } => "cylinder",
            ObjectKind::Ball { .. } => "ball",
        }
    }
}

/// Rigidly poses an object template: `v' = R v + t` with `R` the Rodrigues
/// rotation of `params.rotation`. Connectivity is untouched.
pub fn object_forward(template: &Mesh, params: &ObjectParams) -> Mesh {
    let r = rodrigues(&params.rotation);
    let vertices = template
        .vertices
        .iter()
        .map(|v| Point3::from(r * v.coords + params.translation))
        .collect();
    Mesh {
        vertices,
        faces: template.faces.clone(),
        edges: template.edges.clone(),
    }
}

/// Surface lattice box: all grid points on the boundary of an
/// `(n+1)^3` lattice, with two triangles per boundary cell.
fn box_mesh(w: f64, h: f64, d: f64, n: usize) -> Mesh {
    let mut index: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
    let mut vertices = Vec::new();
    let mut vertex_at = |i: usize, j: usize, k: usize| -> usize {
        *index.entry((i, j, k)).or_insert_with(|| {
            let f = |t: usize, len: f64| (t as f64 / n as f64 - 0.5) * len;
            vertices.push(Point3::new(f(i, w), f(j, h), f(k, d)));
            vertices.len() - 1
        })
    };

    let mut faces = Vec::new();
    // For each of the six cube faces, walk its (a, b) grid; `fixed` pins the
    // remaining axis to 0 or n.
    for (axis, fixed) in [(0, 0), (0, n), (1, 0), (1, n), (2, 0), (2, n)] {
        for a in 0..n {
            for b in 0..n {
                let corner = |da: usize, db: usize| -> (usize, usize, usize) {
                    match axis {
                        0 => (fixed, a + da, b + db),
                        1 => (a + da, fixed, b + db),
                        _ => (a + da, b + db, fixed),
                    }
                };
                let (c00, c10, c11, c01) =
                    (corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1));
                let (i00, i10, i11, i01) = (
                    vertex_at(c00.0, c00.1, c00.2),
                    vertex_at(c10.0, c10.1, c10.2),
                    vertex_at(c11.0, c11.1, c11.2),
                    vertex_at(c01.0, c01.1, c01.2),
                );
                faces.push([i00, i10, i11]);
                faces.push([i00, i11, i01]);
            }
        }
    }
    Mesh::from_faces(vertices, faces)
}

fn cylinder_mesh(r: f64, h: f64, nseg: usize, nring: usize) -> Mesh {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for ring in 0..nring {
        let y = (ring as f64 / (nring - 1) as f64 - 0.5) * h;
        for s in 0..nseg {
            let phi = s as f64 / nseg as f64 * TAU;
            vertices.push(Point3::new(r * phi.cos(), y, r * phi.sin()));
        }
    }
    for ring in 0..nring - 1 {
        let a = ring * nseg;
        let b = (ring + 1) * nseg;
        for s in 0..nseg {
            let s2 = (s + 1) % nseg;
            faces.push([a + s, b + s, b + s2]);
            faces.push([a + s, b + s2, a + s2]);
        }
    }
    let bottom = vertices.len();
    vertices.push(Point3::new(0.0, -0.5 * h, 0.0));
    let top = vertices.len();
    vertices.push(Point3::new(0.0, 0.5 * h, 0.0));
    let last = (nring - 1) * nseg;
    for s in 0..nseg {
        let s2 = (s + 1) % nseg;
        faces.push([s, s2, bottom]);
        faces.push([last + s2, last + s, top]);
    }
    Mesh::from_faces(vertices, faces)
}

fn sphere_mesh(r: f64, nseg: usize, nlat: usize) -> Mesh {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    // Interior latitude rings (poles handled separately).
    for lat in 1..nlat {
        let theta = lat as f64 / nlat as f64 * std::f64::consts::PI;
        for s in 0..nseg {
            let phi = s as f64 / nseg as f64 * TAU;
            vertices.push(Point3::new(
                r * theta.sin() * phi.cos(),
                r * theta.cos(),
                r * theta.sin() * phi.sin(),
            ));
        }
    }
    for lat in 0..nlat - 2 {
        let a = lat * nseg;
        let b = (lat + 1) * nseg;
        for s in 0..nseg {
            let s2 = (s + 1) % nseg;
            faces.push([a + s, b + s, b + s2]);
            faces.push([a + s, b + s2, a + s2]);
        }
    }
    let north = vertices.len();
    vertices.push(Point3::new(0.0, r, 0.0));
    let south = vertices.len();
    vertices.push(Point3::new(0.0, -r, 0.0));
    let last = (nlat - 2) * nseg;
    for s in 0..nseg {
        let s2 = (s + 1) % nseg;
        faces.push([s2, s, north]);
        faces.push([last + s, last + s2, south]);
    }
    Mesh::from_faces(vertices, faces)
}
