use crate::SceneError;
use conrec_geom::{Camera, Mesh};
use nalgebra::Vector3;

/// Channel count of the rasterized input.
pub const CHANNELS: usize = 5;
/// Normalized inverse depth of the nearest surface, 0 where empty.
pub const CH_DEPTH: usize = 0;
/// Flat shading of the human where it is the visible surface, 0 elsewhere.
pub const CH_SHADE_HUMAN: usize = 1;
/// Flat shading of the object where it is the visible surface, 0 elsewhere.
pub const CH_SHADE_OBJECT: usize = 2;
/// Amodal human silhouette mask (no cross-mesh occlusion).
pub const CH_MASK_HUMAN: usize = 3;
/// Amodal object silhouette mask.
pub const CH_MASK_OBJECT: usize = 4;

/// Reference depth for the inverse-depth channel: a surface at `Z_REF`
/// meters maps to 1.0, twice that to 0.5, and so on (clamped to [0, 1]).
pub const Z_REF: f64 = 1.0;

/// Direction of the single directional light (normalized at use). Shading is
/// two-sided (`|n . l|`), so the sign convention does not matter.
const LIGHT: Vector3<f64> = Vector3::new(0.4, -0.6, -0.7);

/// Area threshold below which a projected triangle is treated as degenerate
/// and skipped.
const MIN_AREA2: f64 = 1e-12;

/// Flat index of channel `c`, row `y`, column `x` in a `CHANNELS x h x w`
/// raster buffer.
pub fn raster_index(c: usize, y: usize, x: usize, height: usize, width: usize) -> usize {
    (c * height + y) * width + x
}

/// Renders the human and object meshes into a `CHANNELS x height x width`
/// buffer (channel-major, row-major within a channel).
///
/// * Channel 0: per-pixel `clamp(Z_REF / z, 0, 1)` of the nearest surface
///   across both meshes (a shared z-buffer), 0 where neither covers.
/// * Channels 1–2: flat `|n . l|` shading of the visible surface, split by
///   category — each pixel is nonzero in at most one of the two.
/// * Channels 3–4: amodal silhouette masks, one per mesh, ignoring the other
///   mesh entirely.
///
/// A pixel is covered by a triangle when its center `(x + 0.5, y + 0.5)`
/// lies inside (boundary included) the projected triangle; depth at the
/// center is interpolated perspective-correctly via `1/z`. Meshes that
/// project entirely off-frame simply contribute nothing; any vertex at
/// `z <= 0` is an error.
pub fn rasterize(
    human: &Mesh,
    object: &Mesh,
    camera: &Camera,
    height: usize,
    width: usize,
) -> Result<Vec<f64>, SceneError> {
    let mut out = vec![0.0; CHANNELS * height * width];
    let human_uv = camera.project(&human.vertices)?;
    let object_uv = camera.project(&object.vertices)?;

    // Shared z-buffer pass: per pixel, the largest 1/z across both meshes
    // wins and brings its mesh's shading channel along.
    let mut best_inv_z = vec![0.0f64; height * width];
    for (mesh, uv, shade_channel) in [
        (human, &human_uv, CH_SHADE_HUMAN),
        (object, &object_uv, CH_SHADE_OBJECT),
    ] {
        for face in &mesh.faces {
            let tri = Projected::new(mesh, uv, face);
            let shade = tri.shade();
            tri.for_each_pixel(height, width, |x, y, inv_z| {
                let p = y * width + x;
                if inv_z > best_inv_z[p] {
                    best_inv_z[p] = inv_z;
                    out[raster_index(CH_DEPTH, y, x, height, width)] =
                        (Z_REF * inv_z).clamp(0.0, 1.0);
                    out[raster_index(CH_SHADE_HUMAN, y, x, height, width)] = 0.0;
                    out[raster_index(CH_SHADE_OBJECT, y, x, height, width)] = 0.0;
                    out[raster_index(shade_channel, y, x, height, width)] = shade;
                }
            });
        }
    }

    // Amodal mask passes: coverage only, no depth competition.
    for (mesh, uv, mask_channel) in [
        (human, &human_uv, CH_MASK_HUMAN),
        (object, &object_uv, CH_MASK_OBJECT),
    ] {
        for face in &mesh.faces {
            let tri = Projected::new(mesh, uv, face);
            tri.for_each_pixel(height, width, |x, y, _| {
                out[raster_index(mask_channel, y, x, height, width)] = 1.0;
            });
        }
    }

    Ok(out)
}

/// One mesh triangle after projection: screen positions, camera-space
/// inverse depths, and the world-space corners (for shading).
struct Projected {
    u: [[f64; 2]; 3],
    inv_z: [f64; 3],
    world: [Vector3<f64>; 3],
}

impl Projected {
    fn new(mesh: &Mesh, uv: &[[f64; 2]], face: &[usize; 3]) -> Projected {
        let at = |i: usize| mesh.vertices[face[i]].coords;
        Projected {
            u: [uv[face[0]], uv[face[1]], uv[face[2]]],
            inv_z: [
                1.0 / mesh.vertices[face[0]].z,
                1.0 / mesh.vertices[face[1]].z,
                1.0 / mesh.vertices[face[2]].z,
            ],
            world: [at(0), at(1), at(2)],
        }
    }

    /// Two-sided flat shading from the world-space face normal.
    fn shade(&self) -> f64 {
        let n = (self.world[1] - self.world[0]).cross(&(self.world[2] - self.world[0]));
        let len = n.norm();
        if len < 1e-18 {
            return 0.0;
        }
        (n.dot(&LIGHT) / (len * LIGHT.norm())).abs()
    }

    /// Calls `visit(x, y, inv_z)` for every covered pixel center inside the
    /// `height x width` frame, with perspective-correct interpolated `1/z`.
    fn for_each_pixel(&self, height: usize, width: usize, mut visit: impl FnMut(usize, usize, f64)) {
        let [a, b, c] = self.u;
        let area2 = edge(a, b, c);
        if area2.abs() < MIN_AREA2 {
            return;
        }
        // Pixel centers x + 0.5 within [min_u, max_u], clipped to the frame.
        let min_u = a[0].min(b[0]).min(c[0]);
        let max_u = a[0].max(b[0]).max(c[0]);
        let min_v = a[1].min(b[1]).min(c[1]);
        let max_v = a[1].max(b[1]).max(c[1]);
        let x0 = (min_u - 0.5).ceil().max(0.0) as i64;
        let x1 = (max_u - 0.5).floor().min(width as f64 - 1.0) as i64;
        let y0 = (min_v - 0.5).ceil().max(0.0) as i64;
        let y1 = (max_v - 0.5).floor().min(height as f64 - 1.0) as i64;
        if x1 < x0 || y1 < y0 || x0 >= width as i64 || y0 >= height as i64 {
            return;
        }
        for y in y0..=y1 {
            for x in x0..=x1 {
                let p = [x as f64 + 0.5, y as f64 + 0.5];
                // Barycentric coordinates; dividing by the signed area makes
                // the inside test winding-independent.
                let l0 = edge(b, c, p) / area2;
                let l1 = edge(c, a, p) / area2;
                let l2 = edge(a, b, p) / area2;
                if l0 >= 0.0 && l1 >= 0.0 && l2 >= 0.0 {
                    let inv_z = l0 * self.inv_z[0] + l1 * self.inv_z[1] + l2 * self.inv_z[2];
                    visit(x as usize, y as usize, inv_z);
                }
            }
        }
    }
}

/// Signed double area of triangle `(a, b, p)` — the 2D edge function.
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}
