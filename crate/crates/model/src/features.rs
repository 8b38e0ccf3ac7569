//! Feature extraction shared by the contact and refinement stages: a 1x1
//! channel reduction of the backbone map, and 3D-guided per-vertex features
//! sampled at each vertex's projected image location.

use crate::backbone::BackboneOut;
use crate::config::ModelConfig;
use crate::ModelError;
use conrec_geom::Camera;
use conrec_tensor::store::Binder;
use conrec_tensor::{Graph, Linear, Var};

/// Minimum camera-space depth used when projecting graph variables. Keeps
/// the perspective division well conditioned without affecting any point a
/// plausible scene can produce (scenes live well beyond this).
pub const MIN_DEPTH: f64 = 0.1;

/// Affine map from image pixel coordinates to feature-map coordinates, with
/// matching scalar and graph forms. Pixel centers align with cell centers:
/// pixel `u` of a `W`-wide image lands at `(u + 0.5) * (w / W) - 0.5` in a
/// `w`-wide map. Both forms run the same three operations in the same order,
/// so they agree bitwise on equal inputs.
#[derive(Debug, Clone, Copy)]
pub struct HeatmapScale {
    kx: f64,
    ky: f64,
}

impl HeatmapScale {
    /// `image_hw` and `map_hw` are (height, width) pairs.
    pub fn new(image_hw: (usize, usize), map_hw: (usize, usize)) -> HeatmapScale {
        HeatmapScale {
            kx: map_hw.1 as f64 / image_hw.1 as f64,
            ky: map_hw.0 as f64 / image_hw.0 as f64,
        }
    }

    pub fn map_x(&self, u: f64) -> f64 {
        (u + 0.5) * self.kx - 0.5
    }

    pub fn map_y(&self, v: f64) -> f64 {
        (v + 0.5) * self.ky - 0.5
    }

    fn graph_x(&self, g: &Graph, u: Var) -> Var {
        g.add_scalar(g.scale(g.add_scalar(u, 0.5), self.kx), -0.5)
    }

    fn graph_y(&self, g: &Graph, v: Var) -> Var {
        g.add_scalar(g.scale(g.add_scalar(v, 0.5), self.ky), -0.5)
    }
}

/// Projects a `(3, N)` block of camera-space points to `(2, N)` pixel
/// coordinates, clamping depth at [`MIN_DEPTH`]. Above the clamp the
/// arithmetic matches [`Camera::project_point`] operation for operation.
pub fn project_rows(g: &Graph, points: Var, camera: &Camera) -> Result<Var, ModelError> {
    let x = g.slice_rows(points, 0, 1)?;
    let y = g.slice_rows(points, 1, 2)?;
    let z = g.clamp(g.slice_rows(points, 2, 3)?, MIN_DEPTH, f64::INFINITY);
    let u = g.add_scalar(g.div(g.scale(x, camera.fx), z)?, camera.cx);
    let v = g.add_scalar(g.div(g.scale(y, camera.fy), z)?, camera.cy);
    Ok(g.concat_rows(&[u, v])?)
}

/// 1x1 reduction of the backbone feature map to `feature_dim` channels.
pub fn reduce_feature_map(
    b: &mut Binder,
    cfg: &ModelConfig,
    bb: &BackboneOut,
) -> Result<Var, ModelError> {
    let g = b.graph();
    let flat = g.reshape(bb.feat, &[cfg.backbone_channels, bb.height * bb.width])?;
    let lin = Linear::new("feat.reduce", cfg.backbone_channels, cfg.feature_dim);
    let out = lin.forward(b, flat)?;
    Ok(b.graph().reshape(out, &[cfg.feature_dim, bb.height, bb.width])?)
}

/// Per-vertex features for one mesh: the reduced map sampled at every
/// projected vertex, stacked on the vertex coordinates themselves, giving
/// `(feature_dim + 3, V)`. Errors if any vertex sits at or behind the camera
/// plane — such a vertex has no image location to sample.
pub fn vertex_features(
    g: &Graph,
    reduced: Var,
    mesh: Var,
    camera: &Camera,
    scale: HeatmapScale,
) -> Result<Var, ModelError> {
    let v_count = g.shape(mesh)[1];
    let vals = g.values(mesh);
    for i in 0..v_count {
        let z = vals[2 * v_count + i];
        if z <= 0.0 {
            return Err(ModelError::BehindCamera { index: i, z });
        }
    }
    let proj = project_rows(g, mesh, camera)?;
    let hx = scale.graph_x(g, g.slice_rows(proj, 0, 1)?);
    let hy = scale.graph_y(g, g.slice_rows(proj, 1, 2)?);
    let pts = g.transpose(g.concat_rows(&[hx, hy])?);
    let sampled = g.grid_sample(reduced, pts)?;
    Ok(g.concat_rows(&[sampled, mesh])?)
}
