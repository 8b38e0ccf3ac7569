//! Contact-guided mesh refinement. Each mesh runs a masked cross-attention
//! branch (reading the other mesh's vertex features with non-contact
//! columns zeroed) and an unmasked self-attention branch; their sum passes
//! through a final self-attention stack and a zero-initialized offset head.
//! The refined mesh is the initial mesh plus the predicted offsets, so a
//! fresh model reproduces its input exactly.

use crate::config::ModelConfig;
use crate::ModelError;
use conrec_tensor::store::Binder;
use conrec_tensor::{Linear, TransformerStack, Var};

/// Refined meshes and the offsets that produced them, all `(3, V)`.
#[derive(Debug, Clone, Copy)]
pub struct RefineOut {
    pub human: Var,
    pub object: Var,
    pub offsets_human: Var,
    pub offsets_object: Var,
}

/// The refinement module. Streams use separate weights; the only coupling
/// is cross-attention onto the other stream's masked, projected features,
/// so vertices dropped by the mask cannot influence the other mesh at all.
#[derive(Debug, Clone)]
pub struct CrFormer {
    in_h: Linear,
    in_o: Linear,
    ca_h: TransformerStack,
    ca_o: TransformerStack,
    sa_h: TransformerStack,
    sa_o: TransformerStack,
    fin_h: TransformerStack,
    fin_o: TransformerStack,
    head_h: Linear,
    head_o: Linear,
}

impl CrFormer {
    pub fn new(cfg: &ModelConfig) -> CrFormer {
        let d_in = cfg.vertex_feature_dim();
        let d = cfg.feature_dim;
        let stack = cfg.refine_stack();
        CrFormer {
            in_h: Linear::new("cr.in_h", d_in, d),
            in_o: Linear::new("cr.in_o", d_in, d),
            ca_h: TransformerStack::new("cr.ca_h", stack),
            ca_o: TransformerStack::new("cr.ca_o", stack),
            sa_h: TransformerStack::new("cr.sa_h", stack),
            sa_o: TransformerStack::new("cr.sa_o", stack),
            fin_h: TransformerStack::new("cr.fin_h", stack),
            fin_o: TransformerStack::new("cr.fin_o", stack),
            head_h: Linear::zeroed("cr.head_h", d, 3),
            head_o: Linear::zeroed("cr.head_o", d, 3),
        }
    }

    /// Refines both meshes. `mask_h` / `mask_o` are optional `(1, V)` 0/1
    /// keep-rows (see [`crate::contact::mask_row`]); when present, the
    /// masked features are what the *other* stream's cross-attention reads.
    /// `None` skips masking entirely.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        b: &mut Binder,
        feat_h: Var,
        feat_o: Var,
        mask_h: Option<Var>,
        mask_o: Option<Var>,
        mesh_h: Var,
        mesh_o: Var,
    ) -> Result<RefineOut, ModelError> {
        let g = b.graph();
        let kv_src_h = match mask_h {
            Some(m) => g.mul_row(feat_h, m)?,
            None => feat_h,
        };
        let kv_src_o = match mask_o {
            Some(m) => g.mul_row(feat_o, m)?,
            None => feat_o,
        };
        let q_h = self.in_h.forward(b, feat_h)?;
        let q_o = self.in_o.forward(b, feat_o)?;
        let kv_h = self.in_h.forward(b, kv_src_h)?;
        let kv_o = self.in_o.forward(b, kv_src_o)?;

        let ca_h = self.ca_h.forward_cross(b, q_h, kv_o)?;
        let sa_h = self.sa_h.forward_self(b, q_h)?;
        let mix_h = b.graph().add(ca_h, sa_h)?;
        let fin_h = self.fin_h.forward_self(b, mix_h)?;
        let off_h = self.head_h.forward(b, fin_h)?;

        let ca_o = self.ca_o.forward_cross(b, q_o, kv_h)?;
        let sa_o = self.sa_o.forward_self(b, q_o)?;
        let mix_o = b.graph().add(ca_o, sa_o)?;
        let fin_o = self.fin_o.forward_self(b, mix_o)?;
        let off_o = self.head_o.forward(b, fin_o)?;

        let g = b.graph();
        Ok(RefineOut {
            human: g.add(mesh_h, off_h)?,
            object: g.add(mesh_o, off_o)?,
            offsets_human: off_h,
            offsets_object: off_o,
        })
    }
}
