use crate::mesh::Mesh;
use crate::GeomError;
use nalgebra::Point3;

/// Distance from each point of `from` to its nearest neighbor in `to`,
/// computed by exhaustive search. Quadratic, which is fine at the vertex
/// counts used here (a few hundred points per mesh) and has the advantage of
/// being exactly the definition.
pub fn nn_dists(from: &[Point3<f64>], to: &[Point3<f64>]) -> Result<Vec<f64>, GeomError> {
    if to.is_empty() {
        return Err(GeomError::EmptySet("nearest-neighbor target"));
    }
    Ok(from
        .iter()
        .map(|p| {
            to.iter()
                .map(|q| (p - q).norm_squared())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect())
}

/// Symmetric Chamfer distance between two point sets, in centimeters:
/// half the sum of the two directed mean nearest-neighbor distances, with
/// the meter-to-centimeter factor applied at the end.
///
/// `chamfer_cm = 100 * 0.5 * (mean_a min_b |a-b| + mean_b min_a |b-a|)`
pub fn chamfer_cm(a: &[Point3<f64>], b: &[Point3<f64>]) -> Result<f64, GeomError> {
    if a.is_empty() {
        return Err(GeomError::EmptySet("chamfer left operand"));
    }
    if b.is_empty() {
        return Err(GeomError::EmptySet("chamfer right operand"));
    }
    let ab = mean(&nn_dists(a, b)?);
    let ba = mean(&nn_dists(b, a)?);
    Ok(100.0 * 0.5 * (ab + ba))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Distance from `p` to the closest point of triangle `abc`, handling all
/// face/edge/vertex regions of the Voronoi decomposition.
pub fn point_triangle_dist(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> f64 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm(); // vertex a
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm(); // vertex b
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (ap - ab * v).norm(); // edge ab
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm(); // vertex c
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (ap - ac * w).norm(); // edge ac
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (bp - (c - b) * w).norm(); // edge bc
    }
    // interior: project onto the face plane
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (ap - (ab * v + ac * w)).norm()
}

/// Distance from `p` to the surface of `mesh` (minimum over its faces).
pub fn dist_to_surface(p: &Point3<f64>, mesh: &Mesh) -> Result<f64, GeomError> {
    if mesh.faces.is_empty() {
        return Err(GeomError::EmptySet("surface faces"));
    }
    Ok(mesh
        .faces
        .iter()
        .map(|f| {
            point_triangle_dist(
                p,
                &mesh.vertices[f[0]],
                &mesh.vertices[f[1]],
                &mesh.vertices[f[2]],
            )
        })
        .fold(f64::INFINITY, f64::min))
}
