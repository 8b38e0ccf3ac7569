//! Network building blocks over the autodiff graph.
//!
//! Everything here follows one layout convention: a feature matrix is
//! (features x tokens), i.e. each column is one token/vertex/joint and
//! normalization acts down columns. Modules hold only names and sizes;
//! parameters live in the [`ParamStore`](crate::store::ParamStore) and are
//! bound into the current graph through a [`Binder`].

use crate::graph::Var;
use crate::store::{Binder, Init};
use crate::TensorError;

const LN_EPS: f64 = 1e-5;

/// Affine map y = Wx + b with W (d_out x d_in), applied to (d_in x N).
#[derive(Debug, Clone)]
pub struct Linear {
    pub name: String,
    pub d_in: usize,
    pub d_out: usize,
    pub init: Init,
}

impl Linear {
    pub fn new(name: impl Into<String>, d_in: usize, d_out: usize) -> Linear {
        Linear {
            name: name.into(),
            d_in,
            d_out,
            init: Init::Uniform { fan_in: d_in },
        }
    }

    /// A head whose weights and bias start at exactly zero.
    pub fn zeroed(name: impl Into<String>, d_in: usize, d_out: usize) -> Linear {
        Linear {
            name: name.into(),
            d_in,
            d_out,
            init: Init::Zeros,
        }
    }

    pub fn forward(&self, b: &mut Binder, x: Var) -> Result<Var, TensorError> {
        let w = b.param(&format!("{}.w", self.name), &[self.d_out, self.d_in], self.init)?;
        let bias = b.param(&format!("{}.b", self.name), &[self.d_out, 1], Init::Zeros)?;
        let g = b.graph();
        let y = g.matmul(w, x)?;
        g.add_col(y, bias)
    }
}

/// Per-column layer normalization with learned per-feature gain and bias.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub name: String,
    pub dim: usize,
}

impl LayerNorm {
    pub fn new(name: impl Into<String>, dim: usize) -> LayerNorm {
        LayerNorm {
            name: name.into(),
            dim,
        }
    }

    pub fn forward(&self, b: &mut Binder, x: Var) -> Result<Var, TensorError> {
        let gain = b.param(&format!("{}.g", self.name), &[self.dim, 1], Init::Constant(1.0))?;
        let bias = b.param(&format!("{}.b", self.name), &[self.dim, 1], Init::Zeros)?;
        let g = b.graph();
        let n = g.layernorm_cols(x, LN_EPS);
        let scaled = g.mul_col(n, gain)?;
        g.add_col(scaled, bias)
    }
}

/// Two-layer MLP: d -> hidden -> d with a ReLU between.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub lin1: Linear,
    pub lin2: Linear,
}

impl FeedForward {
    pub fn new(name: &str, dim: usize, hidden: usize) -> FeedForward {
        FeedForward {
            lin1: Linear::new(format!("{name}.ff1"), dim, hidden),
            lin2: Linear::new(format!("{name}.ff2"), hidden, dim),
        }
    }

    pub fn forward(&self, b: &mut Binder, x: Var) -> Result<Var, TensorError> {
        let h = self.lin1.forward(b, x)?;
        let h = b.graph().relu(h);
        self.lin2.forward(b, h)
    }
}

/// Scaled dot-product attention mixing: queries pick a convex combination
/// of value columns. `q`, `k` are (d x N_q), (d x N_kv); `v` is (d_v x N_kv);
/// the result is (d_v x N_q). Softmax runs over the key axis, so with a
/// single key/value column every query returns that column, and identical
/// keys average their values.
pub fn attention_mix(
    g: &crate::graph::Graph,
    q: Var,
    k: Var,
    v: Var,
) -> Result<Var, TensorError> {
    let d = g.shape(q)[0];
    let kt = g.transpose(k);
    let scores = g.matmul(kt, q)?;
    let scaled = g.scale(scores, 1.0 / (d as f64).sqrt());
    let attn = g.softmax(scaled, 0)?;
    g.matmul(v, attn)
}

/// One attention block. The query stream is normalized, attends to the
/// (separately normalized) key/value stream, and the attention output is
/// added back onto the *normalized* queries; a feed-forward half follows the
/// same pattern. With all attention and feed-forward weights at zero the
/// block reduces to two stacked layer norms of its query input, which keeps
/// freshly initialized refinement stages from disturbing their input stream.
#[derive(Debug, Clone)]
pub struct AttentionBlock {
    pub name: String,
    pub dim: usize,
    pub heads: usize,
    ln_q: LayerNorm,
    ln_kv: LayerNorm,
    ln_mid: LayerNorm,
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
    ff: FeedForward,
}

impl AttentionBlock {
    pub fn new(name: &str, dim: usize, heads: usize, hidden: usize) -> AttentionBlock {
        assert!(heads > 0 && dim % heads == 0, "heads must divide dim");
        AttentionBlock {
            ln_q: LayerNorm::new(format!("{name}.ln_q"), dim),
            ln_kv: LayerNorm::new(format!("{name}.ln_kv"), dim),
            ln_mid: LayerNorm::new(format!("{name}.ln_mid"), dim),
            wq: Linear::new(format!("{name}.wq"), dim, dim),
            wk: Linear::new(format!("{name}.wk"), dim, dim),
            wv: Linear::new(format!("{name}.wv"), dim, dim),
            wo: Linear::new(format!("{name}.wo"), dim, dim),
            ff: FeedForward::new(name, dim, hidden),
            name: name.to_string(),
            dim,
            heads,
        }
    }

    /// Cross-attention when `kv` differs from `q_src`; self-attention when
    /// they are the same node.
    pub fn forward(&self, b: &mut Binder, q_src: Var, kv_src: Var) -> Result<Var, TensorError> {
        let q_base = self.ln_q.forward(b, q_src)?;
        let kv_base = self.ln_kv.forward(b, kv_src)?;
        let q = self.wq.forward(b, q_base)?;
        let k = self.wk.forward(b, kv_base)?;
        let v = self.wv.forward(b, kv_base)?;
        let dh = self.dim / self.heads;
        let g = b.graph();
        let mut head_outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qs = g.slice_rows(q, h * dh, (h + 1) * dh)?;
            let ks = g.slice_rows(k, h * dh, (h + 1) * dh)?;
            let vs = g.slice_rows(v, h * dh, (h + 1) * dh)?;
            head_outs.push(attention_mix(g, qs, ks, vs)?);
        }
        let mixed = g.concat_rows(&head_outs)?;
        let proj = self.wo.forward(b, mixed)?;
        let g = b.graph();
        let y = g.add(q_base, proj)?;
        let y_norm = self.ln_mid.forward(b, y)?;
        let f = self.ff.forward(b, y_norm)?;
        b.graph().add(y_norm, f)
    }
}

/// Size hyperparameters for one stack of attention blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackConfig {
    pub layers: usize,
    pub dim: usize,
    pub heads: usize,
    pub hidden: usize,
}

impl Default for StackConfig {
    fn default() -> StackConfig {
        StackConfig {
            layers: 2,
            dim: 64,
            heads: 4,
            hidden: 128,
        }
    }
}

/// A sequence of attention blocks sharing one key/value source. Passing the
/// running stream itself as `kv` at each layer makes it a self-attention
/// stack; passing a fixed other stream makes it a cross-attention stack.
#[derive(Debug, Clone)]
pub struct TransformerStack {
    pub blocks: Vec<AttentionBlock>,
}

impl TransformerStack {
    pub fn new(name: &str, cfg: StackConfig) -> TransformerStack {
        let blocks = (0..cfg.layers)
            .map(|i| AttentionBlock::new(&format!("{name}.{i}"), cfg.dim, cfg.heads, cfg.hidden))
            .collect();
        TransformerStack { blocks }
    }

    /// Cross-attention: every layer queries the running stream against the
    /// same `kv` stream.
    pub fn forward_cross(&self, b: &mut Binder, q: Var, kv: Var) -> Result<Var, TensorError> {
        let mut x = q;
        for blk in &self.blocks {
            x = blk.forward(b, x, kv)?;
        }
        Ok(x)
    }

    /// Self-attention: every layer queries the running stream against itself.
    pub fn forward_self(&self, b: &mut Binder, x0: Var) -> Result<Var, TensorError> {
        let mut x = x0;
        for blk in &self.blocks {
            x = blk.forward(b, x, x)?;
        }
        Ok(x)
    }
}
