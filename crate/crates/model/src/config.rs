//! Model hyperparameters and the contact-mask policy.

use crate::ModelError;
use conrec_tensor::StackConfig;
use serde::{Deserialize, Serialize};

/// Where the refinement mask comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Threshold the model's own predicted contact probabilities.
    #[default]
    Predicted,
    /// Threshold the ground-truth contact map instead (teacher forcing).
    TeacherForced,
    /// No masking: the cross-attention branch sees all vertex features.
    None,
}

/// Per-term coefficients of the training loss. The defaults weight every
/// term equally; they exist as knobs, not as tuned values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub contact: f64,
    pub vertex: f64,
    pub edge: f64,
    pub param: f64,
    pub coord: f64,
}

impl Default for LossWeights {
    fn default() -> LossWeights {
        LossWeights {
            contact: 1.0,
            vertex: 1.0,
            edge: 1.0,
            param: 1.0,
            coord: 1.0,
        }
    }
}

/// Network widths, depths, and mask policy.
///
/// `backbone_channels` is the width of the final backbone projection; the
/// three stem convolutions have fixed widths 24/48/96. `feature_dim` is the
/// reduced per-vertex feature width; vertex features carry three extra
/// coordinate rows on top of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub backbone_channels: usize,
    pub feature_dim: usize,
    pub heads: usize,
    pub ff_hidden: usize,
    /// Cross-attention layers per direction in the contact stage.
    pub contact_layers: usize,
    /// Layers per stack (cross, self, and final self) in the refinement stage.
    pub refine_layers: usize,
    /// Depth bins of the per-joint 3D heatmaps.
    pub depth_bins: usize,
    /// Camera-space depth mapped onto bin 0 / the last bin.
    pub z_min: f64,
    pub z_max: f64,
    /// Contact probability below which a vertex-feature column is masked.
    pub mask_threshold: f64,
    pub mask_mode: MaskMode,
    pub loss: LossWeights,
}

impl Default for ModelConfig {
    fn default() -> ModelConfig {
        ModelConfig {
            backbone_channels: 128,
            feature_dim: 64,
            heads: 4,
            ff_hidden: 128,
            contact_layers: 1,
            refine_layers: 1,
            depth_bins: 8,
            z_min: 1.0,
            z_max: 5.0,
            mask_threshold: 0.5,
            mask_mode: MaskMode::Predicted,
            loss: LossWeights::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if self.backbone_channels == 0 {
            return bad("backbone_channels must be at least 1".into());
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be at least 1".into());
        }
        if self.heads == 0 || self.feature_dim % self.heads != 0 {
            return bad(format!(
                "heads must divide feature_dim, got {} heads for width {}",
                self.heads, self.feature_dim
            ));
        }
        if self.ff_hidden == 0 {
            return bad("ff_hidden must be at least 1".into());
        }
        if self.contact_layers == 0 || self.refine_layers == 0 {
            return bad("contact_layers and refine_layers must be at least 1".into());
        }
        if self.depth_bins < 2 {
            return bad(format!("depth_bins must be at least 2, got {}", self.depth_bins));
        }
        if !(self.z_min.is_finite() && self.z_max.is_finite()) || self.z_min <= 0.0 {
            return bad(format!("z_min must be positive and finite, got {}", self.z_min));
        }
        if self.z_max <= self.z_min {
            return bad(format!(
                "z_max must exceed z_min, got [{}, {}]",
                self.z_min, self.z_max
            ));
        }
        if !(self.mask_threshold > 0.0 && self.mask_threshold < 1.0) {
            return bad(format!(
                "mask_threshold must lie strictly inside (0, 1), got {}",
                self.mask_threshold
            ));
        }
        for (name, w) in [
            ("contact", self.loss.contact),
            ("vertex", self.loss.vertex),
            ("edge", self.loss.edge),
            ("param", self.loss.param),
            ("coord", self.loss.coord),
        ] {
            if !w.is_finite() || w < 0.0 {
                return bad(format!("loss weight {name} must be finite and >= 0, got {w}"));
            }
        }
        Ok(())
    }

    pub(crate) fn contact_stack(&self) -> StackConfig {
        StackConfig {
            layers: self.contact_layers,
            dim: self.feature_dim,
            heads: self.heads,
            hidden: self.ff_hidden,
        }
    }

    pub(crate) fn refine_stack(&self) -> StackConfig {
        StackConfig {
            layers: self.refine_layers,
            dim: self.feature_dim,
            heads: self.heads,
            hidden: self.ff_hidden,
        }
    }

    /// Width of one vertex-feature column: reduced features plus (x, y, z).
    pub fn vertex_feature_dim(&self) -> usize {
        self.feature_dim + 3
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        ModelConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_fields_are_named() {
        let mut c = ModelConfig { heads: 3, ..ModelConfig::default() };
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("heads"), "{err}");

        c = ModelConfig { mask_threshold: 1.0, ..ModelConfig::default() };
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("mask_threshold"), "{err}");

        c = ModelConfig { z_max: 0.5, ..ModelConfig::default() };
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("z_max"), "{err}");

        c = ModelConfig::default();
        c.loss.edge = -1.0;
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("edge"), "{err}");
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = ModelConfig { contact_layers: 3, mask_mode: MaskMode::TeacherForced, ..ModelConfig::default() };
        let text = serde_json::to_string(&c).unwrap();
        let back: ModelConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: ModelConfig = serde_json::from_str(r#"{"feature_dim": 32, "mask_mode": "none"}"#).unwrap();
        assert_eq!(c.feature_dim, 32);
        assert_eq!(c.mask_mode, MaskMode::None);
        assert_eq!(c.backbone_channels, 128);
        assert_eq!(c.loss, LossWeights::default());
    }
}
