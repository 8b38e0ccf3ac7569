use crate::GeomError;
use nalgebra::Point3;

/// Pinhole camera intrinsics. The camera sits at the origin looking down +z;
/// pixel coordinates follow the usual image convention (u right, v down).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Camera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Camera {
        Camera { fx, fy, cx, cy }
    }

    /// Intrinsics centered on a `width` x `height` image with a single focal
    /// length for both axes.
    pub fn centered(focal: f64, width: usize, height: usize) -> Camera {
        Camera {
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        }
    }

    /// Projects one camera-space point to pixel coordinates.
    ///
    /// `u = fx * x / z + cx`, `v = fy * y / z + cy`. Points with `z <= 0`
    /// are an error: they are behind (or on) the image plane's focal point
    /// and have no well-defined projection.
    pub fn project_point(&self, p: &Point3<f64>) -> Result<[f64; 2], GeomError> {
        if p.z <= 0.0 {
            return Err(GeomError::BehindCamera { index: 0, z: p.z });
        }
        Ok([
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ])
    }

    /// Projects a batch of camera-space points. Fails on the first point with
    /// `z <= 0`, reporting its index.
    pub fn project(&self, points: &[Point3<f64>]) -> Result<Vec<[f64; 2]>, GeomError> {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                self.project_point(p)
                    .map_err(|_| GeomError::BehindCamera { index: i, z: p.z })
            })
            .collect()
    }
}
