//! Convolutional backbone and the per-joint heatmap head.
//!
//! The stem is three 3x3 convolutions (stride 3, 3, 1) with fixed widths
//! 24/48/96, followed by a 1x1 projection to `backbone_channels`. On a
//! 64x64 raster the spatial size goes 64 -> 22 -> 8 -> 8, so the feature
//! map is an 8x8 grid; inputs whose size does not fit this arithmetic are
//! rejected by the convolution itself.

use crate::config::ModelConfig;
use crate::ModelError;
use conrec_tensor::store::{Binder, Init};
use conrec_tensor::{Pad, Var};

/// Fixed stem widths; `ModelConfig::backbone_channels` sets only the final
/// projected width.
const STEM: [usize; 3] = [24, 48, 96];

/// Backbone feature map plus its spatial extent (also the heatmap extent).
#[derive(Debug, Clone, Copy)]
pub struct BackboneOut {
    /// Feature map, shape (backbone_channels, height, width).
    pub feat: Var,
    pub height: usize,
    pub width: usize,
}

fn conv(
    b: &mut Binder,
    name: &str,
    x: Var,
    c_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    pad: Pad,
) -> Result<Var, ModelError> {
    let w = b.param(
        &format!("{name}.w"),
        &[c_out, c_in, k, k],
        Init::Uniform { fan_in: c_in * k * k },
    )?;
    let bias = b.param(&format!("{name}.b"), &[c_out, 1], Init::Zeros)?;
    Ok(b.graph().conv2d(x, w, bias, stride, pad)?)
}

/// Runs the backbone on a `(channels, H, W)` raster node.
pub fn backbone(b: &mut Binder, cfg: &ModelConfig, raster: Var) -> Result<BackboneOut, ModelError> {
    let g = b.graph();
    let channels = g.shape(raster)[0];
    let x = conv(b, "backbone.conv1", raster, channels, STEM[0], 3, 3, Pad::Same)?;
    let x = b.graph().relu(x);
    let x = conv(b, "backbone.conv2", x, STEM[0], STEM[1], 3, 3, Pad::Same)?;
    let x = b.graph().relu(x);
    let x = conv(b, "backbone.conv3", x, STEM[1], STEM[2], 3, 1, Pad::Same)?;
    let x = b.graph().relu(x);
    let feat = conv(b, "backbone.proj", x, STEM[2], cfg.backbone_channels, 1, 1, Pad::Valid)?;
    let shape = b.graph().shape(feat);
    Ok(BackboneOut {
        feat,
        height: shape[1],
        width: shape[2],
    })
}

/// Spatial extent of the backbone output for an input extent, when the
/// convolution arithmetic is integral.
pub fn backbone_extent(input: usize) -> Option<usize> {
    // 3x3 stride-3 pad-1 twice: n -> (n - 1)/3 + 1, then two stride-1 layers.
    let s1 = if (input + 2).checked_sub(3)? % 3 == 0 {
        (input - 1) / 3 + 1
    } else {
        return None;
    };
    if (s1 + 2 - 3) % 3 == 0 {
        Some((s1 - 1) / 3 + 1)
    } else {
        None
    }
}

/// 1x1 convolution from the backbone features to `joints * depth_bins`
/// heatmap channels.
pub fn joint_heatmaps(
    b: &mut Binder,
    cfg: &ModelConfig,
    bb: &BackboneOut,
    joints: usize,
) -> Result<Var, ModelError> {
    conv(
        b,
        "joints.hm",
        bb.feat,
        cfg.backbone_channels,
        joints * cfg.depth_bins,
        1,
        1,
        Pad::Valid,
    )
}

/// Soft-argmax over each joint's `(depth_bins, h, w)` logit volume.
/// Returns a `(3, joints)` node; rows are (x, y, z) in heatmap-pixel /
/// heatmap-pixel / depth-bin units.
pub fn soft_joints(
    b: &mut Binder,
    cfg: &ModelConfig,
    logits: Var,
    joints: usize,
) -> Result<Var, ModelError> {
    let g = b.graph();
    let shape = g.shape(logits);
    let (h, w) = (shape[1], shape[2]);
    let flat = g.reshape(logits, &[joints * cfg.depth_bins, h * w])?;
    let mut cols = Vec::with_capacity(joints);
    for j in 0..joints {
        let rows = g.slice_rows(flat, j * cfg.depth_bins, (j + 1) * cfg.depth_bins)?;
        let volume = g.reshape(rows, &[cfg.depth_bins, h, w])?;
        cols.push(g.soft_argmax_3d(volume)?);
    }
    Ok(g.concat_cols(&cols)?)
}
