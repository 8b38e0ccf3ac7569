//! Contact estimation: two parallel cross-attention stacks, one per mesh,
//! each reading the other mesh's projected vertex features, followed by
//! zero-initialized per-vertex sigmoid heads.

use crate::config::ModelConfig;
use crate::ModelError;
use conrec_tensor::store::Binder;
use conrec_tensor::{Graph, Linear, TransformerStack, Var};

/// Per-vertex contact probabilities for both meshes, each a `(1, V)` row of
/// values strictly inside (0, 1).
#[derive(Debug, Clone, Copy)]
pub struct ContactOut {
    pub human: Var,
    pub object: Var,
}

/// The contact estimation module. Human and object streams use separate
/// weights throughout; they are coupled only through cross-attention, where
/// each stream's queries read the other stream's projected input.
#[derive(Debug, Clone)]
pub struct ContactFormer {
    in_h: Linear,
    in_o: Linear,
    stack_h: TransformerStack,
    stack_o: TransformerStack,
    head_h: Linear,
    head_o: Linear,
}

impl ContactFormer {
    pub fn new(cfg: &ModelConfig) -> ContactFormer {
        let d_in = cfg.vertex_feature_dim();
        let d = cfg.feature_dim;
        ContactFormer {
            in_h: Linear::new("cf.in_h", d_in, d),
            in_o: Linear::new("cf.in_o", d_in, d),
            stack_h: TransformerStack::new("cf.h", cfg.contact_stack()),
            stack_o: TransformerStack::new("cf.o", cfg.contact_stack()),
            head_h: Linear::zeroed("cf.head_h", d, 1),
            head_o: Linear::zeroed("cf.head_o", d, 1),
        }
    }

    /// `feat_h` and `feat_o` are `(feature_dim + 3, V)` vertex feature
    /// blocks from [`crate::features::vertex_features`].
    pub fn forward(&self, b: &mut Binder, feat_h: Var, feat_o: Var) -> Result<ContactOut, ModelError> {
        let ph = self.in_h.forward(b, feat_h)?;
        let po = self.in_o.forward(b, feat_o)?;
        let xh = self.stack_h.forward_cross(b, ph, po)?;
        let xo = self.stack_o.forward_cross(b, po, ph)?;
        let lh = self.head_h.forward(b, xh)?;
        let lo = self.head_o.forward(b, xo)?;
        let g = b.graph();
        Ok(ContactOut {
            human: g.sigmoid(lh),
            object: g.sigmoid(lo),
        })
    }
}

/// Binary keep-mask from contact values: column `i` is kept (1.0) when
/// `values[i] >= threshold` and dropped (0.0) otherwise. Built outside the
/// graph, so gradients never flow through the masking decision itself.
pub fn mask_row(g: &Graph, values: &[f64], threshold: f64) -> Var {
    let row: Vec<f64> = values
        .iter()
        .map(|&c| if c >= threshold { 1.0 } else { 0.0 })
        .collect();
    g.input(&[1, values.len()], row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use conrec_tensor::store::ParamStore;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_block(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// Builds a store where the (normally zero-initialized) heads carry
    /// nonzero weights, so head outputs actually vary per column.
    fn store_with_live_heads(cfg: &ModelConfig, seed: u64) -> ParamStore {
        let mut store = ParamStore::new(seed);
        let cf = ContactFormer::new(cfg);
        {
            let g = Graph::new();
            let mut b = Binder::new(&mut store, &g);
            let fh = g.input(&[cfg.vertex_feature_dim(), 2], vec![0.1; cfg.vertex_feature_dim() * 2]);
            let fo = g.input(&[cfg.vertex_feature_dim(), 2], vec![0.2; cfg.vertex_feature_dim() * 2]);
            cf.forward(&mut b, fh, fo).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbeef);
        for name in ["cf.head_h.w", "cf.head_o.w"] {
            let shape = store.get(name).unwrap().shape.clone();
            let n: usize = shape.iter().product();
            let vals = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
            store.insert_loaded(name, shape, vals);
        }
        store
    }

    #[test]
    fn outputs_are_rows_of_probabilities() {
        let cfg = ModelConfig::default();
        let mut store = store_with_live_heads(&cfg, 4);
        let cf = ContactFormer::new(&cfg);
        let g = Graph::new();
        let mut b = Binder::new(&mut store, &g);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = cfg.vertex_feature_dim();
        let fh = g.input(&[d, 10], random_block(&mut rng, d, 10));
        let fo = g.input(&[d, 6], random_block(&mut rng, d, 6));
        let out = cf.forward(&mut b, fh, fo).unwrap();
        assert_eq!(g.shape(out.human), vec![1, 10]);
        assert_eq!(g.shape(out.object), vec![1, 6]);
        for v in g.values(out.human).into_iter().chain(g.values(out.object)) {
            assert!(v > 0.0 && v < 1.0, "contact probability out of range: {v}");
        }
    }

    #[test]
    fn zero_initialized_heads_start_at_half() {
        let cfg = ModelConfig::default();
        let mut store = ParamStore::new(11);
        let cf = ContactFormer::new(&cfg);
        let g = Graph::new();
        let mut b = Binder::new(&mut store, &g);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let d = cfg.vertex_feature_dim();
        let fh = g.input(&[d, 5], random_block(&mut rng, d, 5));
        let fo = g.input(&[d, 4], random_block(&mut rng, d, 4));
        let out = cf.forward(&mut b, fh, fo).unwrap();
        for v in g.values(out.human).into_iter().chain(g.values(out.object)) {
            assert_eq!(v, 0.5);
        }
    }

    #[test]
    fn permuting_object_columns_permutes_object_contact_exactly() {
        let cfg = ModelConfig::default();
        let mut store = store_with_live_heads(&cfg, 21);
        let cf = ContactFormer::new(&cfg);
        let d = cfg.vertex_feature_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let fh_vals = random_block(&mut rng, d, 7);
        let fo_vals = random_block(&mut rng, d, 5);
        let perm = [3usize, 0, 4, 1, 2];
        let mut fo_perm = vec![0.0; d * 5];
        for row in 0..d {
            for (dst, &src) in perm.iter().enumerate() {
                fo_perm[row * 5 + dst] = fo_vals[row * 5 + src];
            }
        }

        let g1 = Graph::new();
        let (h1, o1) = {
            let mut b = Binder::new(&mut store, &g1);
            let fh = g1.input(&[d, 7], fh_vals.clone());
            let fo = g1.input(&[d, 5], fo_vals.clone());
            let out = cf.forward(&mut b, fh, fo).unwrap();
            (g1.values(out.human), g1.values(out.object))
        };
        let g2 = Graph::new();
        let (h2, o2) = {
            let mut b = Binder::new(&mut store, &g2);
            let fh = g2.input(&[d, 7], fh_vals);
            let fo = g2.input(&[d, 5], fo_perm);
            let out = cf.forward(&mut b, fh, fo).unwrap();
            (g2.values(out.human), g2.values(out.object))
        };

        // Each object column only ever sees itself and the (unchanged) human
        // stream, so its probability moves with it bitwise.
        for (dst, &src) in perm.iter().enumerate() {
            assert_eq!(o2[dst], o1[src], "object column {src} -> {dst}");
        }
        // Human queries see the object columns only through a key-axis
        // softmax; reordering keys only reorders summation, so values agree
        // to roundoff.
        for (a, b) in h1.iter().zip(&h2) {
            assert!((a - b).abs() < 1e-12, "human contact drifted: {a} vs {b}");
        }
    }

    #[test]
    fn mask_row_keeps_exactly_the_columns_at_or_above_threshold() {
        let g = Graph::new();
        let m = mask_row(&g, &[0.9, 0.1, 0.5, 0.499_999], 0.5);
        assert_eq!(g.values(m), vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(g.shape(m), vec![1, 4]);

        let all = mask_row(&g, &[0.6, 0.7], 0.5);
        assert_eq!(g.values(all), vec![1.0, 1.0]);
        let none = mask_row(&g, &[0.2, 0.3], 0.5);
        assert_eq!(g.values(none), vec![0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn mask_row_matches_the_threshold_rule(
            values in proptest::collection::vec(0.0f64..1.0, 1..40),
            threshold in 0.05f64..0.95,
        ) {
            let g = Graph::new();
            let m = g.values(mask_row(&g, &values, threshold));
            for (v, flag) in values.iter().zip(m) {
                prop_assert_eq!(flag, if *v >= threshold { 1.0 } else { 0.0 });
            }
        }
    }
}
