use nalgebra::Point3;
use std::collections::BTreeSet;

/// A triangle mesh: vertex positions, triangle indices, and a unique edge
/// list.
///
/// The edge list is ordinarily derived from the faces, but meshes produced by
/// vertex downsampling carry reconnected edges without any faces, so it is
/// stored explicitly. Edges are kept sorted (`a < b`) and deduplicated.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<[usize; 3]>,
    pub edges: Vec<[usize; 2]>,
}

impl Mesh {
    /// Builds a mesh from vertices and faces, deriving the unique edge list.
    pub fn from_faces(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Mesh {
        let edges = derive_edges(&faces);
        Mesh { vertices, faces, edges }
    }

    /// Builds a face-less mesh with an explicit edge list (sorted and
    /// deduplicated here, so callers may pass edges in any order).
    pub fn from_edges(vertices: Vec<Point3<f64>>, edges: Vec<[usize; 2]>) -> Mesh {
        let set: BTreeSet<[usize; 2]> = edges
            .into_iter()
            .map(|[a, b]| if a <= b { [a, b] } else { [b, a] })
            .collect();
        Mesh {
            vertices,
            faces: Vec::new(),
            edges: set.into_iter().collect(),
        }
    }

    /// Vertex positions as a flat row-major buffer `[x0, y0, z0, x1, ...]`.
    pub fn flat_vertices(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.vertices.len() * 3);
        for v in &self.vertices {
            out.extend_from_slice(&[v.x, v.y, v.z]);
        }
        out
    }

    /// Replaces vertex positions from a flat row-major buffer.
    ///
    /// Panics if the buffer length is not `3 * vertex count`; connectivity is
    /// untouched.
    pub fn set_flat_vertices(&mut self, flat: &[f64]) {
        assert_eq!(
            flat.len(),
            self.vertices.len() * 3,
            "flat vertex buffer has wrong length"
        );
        for (v, c) in self.vertices.iter_mut().zip(flat.chunks_exact(3)) {
            *v = Point3::new(c[0], c[1], c[2]);
        }
    }

    /// Length of every edge, in edge-list order.
    pub fn edge_lengths(&self) -> Vec<f64> {
        self.edges
            .iter()
            .map(|&[a, b]| (self.vertices[a] - self.vertices[b]).norm())
            .collect()
    }

    /// Per-vertex normals, averaged over incident face normals. The cross
    /// products are left unnormalized before summing, so larger faces weigh
    /// more. Vertices with no incident face get the zero vector.
    pub fn vertex_normals(&self) -> Vec<nalgebra::Vector3<f64>> {
        let mut normals = vec![nalgebra::Vector3::zeros(); self.vertices.len()];
        for &[i, j, k] in &self.faces {
            let n = (self.vertices[j] - self.vertices[i])
                .cross(&(self.vertices[k] - self.vertices[i]));
            normals[i] += n;
            normals[j] += n;
            normals[k] += n;
        }
        for n in &mut normals {
            let len = n.norm();
            if len > 1e-12 {
                *n /= len;
            }
        }
        normals
    }
}

fn derive_edges(faces: &[[usize; 3]]) -> Vec<[usize; 2]> {
    let mut set = BTreeSet::new();
    for &[a, b, c] in faces {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            set.insert(if u <= v { [u, v] } else { [v, u] });
        }
    }
    set.into_iter().collect()
}
