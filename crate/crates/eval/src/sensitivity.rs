//! Occlusion sensitivity: slide a square patch over the input raster,
//! overwrite it with a fill value, and record how much the object Chamfer
//! distance degrades. Windows that matter to the reconstruction light up.

use crate::chamfer::joint_pa_chamfer;
use crate::EvalError;
use conrec_model::Model;
use conrec_scene::Sample;
use conrec_tensor::store::ParamStore;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;

/// Grid of object-Chamfer changes, row-major, one entry per window
/// position. Positive values mean the occlusion made the reconstruction
/// worse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityMap {
    /// Object Chamfer distance (cm) of the unoccluded input.
    pub base_object_cd_cm: f64,
    /// `rows * cols` entries: occluded CD minus base CD.
    pub delta_cd_cm: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub patch: usize,
    pub stride: usize,
    pub fill: f32,
}

impl SensitivityMap {
    /// Top-left raster pixel of the window at grid position `(row, col)`.
    pub fn window_origin(&self, row: usize, col: usize) -> (usize, usize) {
        (row * self.stride, col * self.stride)
    }
}

/// Measures the object Chamfer distance with every placement of a
/// `patch x patch` window (stepped by `stride`) overwritten with `fill`
/// across all raster channels. The cost is one inference per window.
pub fn sensitivity_map(
    model: &Model,
    store: &mut ParamStore,
    sample: &Sample,
    patch: usize,
    stride: usize,
    fill: f32,
) -> Result<SensitivityMap, EvalError> {
    let [channels, height, width] = sample.raster_shape;
    if patch == 0 || stride == 0 {
        return Err(EvalError::Data(format!(
            "patch and stride must be positive, got patch {patch}, stride {stride}"
        )));
    }
    if patch > height || patch > width {
        return Err(EvalError::Data(format!(
            "patch {patch} exceeds the {height}x{width} raster"
        )));
    }
    let rows = (height - patch) / stride + 1;
    let cols = (width - patch) / stride + 1;

    let object_cd = |store: &mut ParamStore, s: &Sample| -> Result<f64, EvalError> {
        let out = model.infer(store, s)?;
        let pa = joint_pa_chamfer(
            &out.human_refined.vertices,
            &out.object_refined.vertices,
            &sample.human.vertices,
            &sample.object.vertices,
        )?;
        Ok(pa.object_cm)
    };

    let base_object_cd_cm = object_cd(store, sample)?;
    let mut delta_cd_cm = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        for col in 0..cols {
            let (y0, x0) = (row * stride, col * stride);
            let mut occluded = sample.clone();
            for c in 0..channels {
                for y in y0..y0 + patch {
                    let base = c * height * width + y * width;
                    occluded.raster[base + x0..base + x0 + patch].fill(fill);
                }
            }
            delta_cd_cm.push(object_cd(store, &occluded)? - base_object_cd_cm);
        }
        log::debug!("sensitivity row {}/{rows} done", row + 1);
    }
    Ok(SensitivityMap {
        base_object_cd_cm,
        delta_cd_cm,
        rows,
        cols,
        patch,
        stride,
        fill,
    })
}

/// Writes the map as a plain-text PGM image, linearly rescaled so the
/// smallest delta is black and the largest is white. A constant map (no
/// window changed anything) comes out all black.
pub fn write_pgm(path: &Path, map: &SensitivityMap) -> Result<(), EvalError> {
    let io = |source: std::io::Error| EvalError::Io {
        path: path.to_path_buf(),
        source,
    };
    let lo = map.delta_cd_cm.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = map
        .delta_cd_cm
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    writeln!(tmp, "P2\n{} {}\n255", map.cols, map.rows).map_err(io)?;
    for row in 0..map.rows {
        let line: Vec<String> = (0..map.cols)
            .map(|col| {
                let d = map.delta_cd_cm[row * map.cols + col];
                let gray = if span > 0.0 {
                    ((d - lo) / span * 255.0).round() as u8
                } else {
                    0
                };
                gray.to_string()
            })
            .collect();
        writeln!(tmp, "{}", line.join(" ")).map_err(io)?;
    }
    tmp.persist(path).map_err(|e| EvalError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}
