use crate::graph::{Graph, Var};
use crate::TensorError;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// How a parameter tensor is filled the first time it is requested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    Uniform { fan_in: usize },
    Zeros,
    Constant(f64),
}

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    /// Adam first-moment estimate.
    pub m: Vec<f64>,
    /// Adam second-moment estimate.
    pub v: Vec<f64>,
}

/// Named parameter tensors plus optimizer state. Iteration order is the
/// lexicographic name order, so every walk over the store is deterministic.
#[derive(Debug, Clone)]
pub struct ParamStore {
    params: BTreeMap<String, ParamEntry>,
    seed: u64,
    /// Number of optimizer steps taken (Adam bias-correction time).
    pub step: u64,
}

impl ParamStore {
    pub fn new(seed: u64) -> ParamStore {
        ParamStore {
            params: BTreeMap::new(),
            seed,
            step: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.params.values().map(|e| e.data.len()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.params.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamEntry)> {
        self.params.iter()
    }

    /// Inserts a parameter with explicit data and fresh optimizer state,
    /// replacing any existing entry (used when loading checkpoints).
    pub fn insert_loaded(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) {
        let n = data.len();
        debug_assert_eq!(shape.iter().product::<usize>(), n);
        self.params.insert(
            name.to_string(),
            ParamEntry {
                shape,
                data,
                m: vec![0.0; n],
                v: vec![0.0; n],
            },
        );
    }

    /// Fetches a parameter, creating it on first use. The fill is derived
    /// from the store seed and the parameter name alone, so initialization
    /// does not depend on the order modules are built in.
    pub fn get_or_init(
        &mut self,
        name: &str,
        shape: &[usize],
        init: Init,
    ) -> Result<&ParamEntry, TensorError> {
        if let Some(existing) = self.params.get(name) {
            if existing.shape != shape {
                return Err(TensorError::BadOp {
                    op: "param",
                    msg: format!(
                        "parameter {name} requested with shape {shape:?} but stored as {:?}",
                        existing.shape
                    ),
                });
            }
        } else {
            let n = shape.iter().product::<usize>();
            let data = match init {
                Init::Zeros => vec![0.0; n],
                Init::Constant(c) => vec![c; n],
                Init::Uniform { fan_in } => {
                    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                    let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(name));
                    let dist = Uniform::new_inclusive(-bound, bound);
                    (0..n).map(|_| dist.sample(&mut rng)).collect()
                }
            };
            self.params.insert(
                name.to_string(),
                ParamEntry {
                    shape: shape.to_vec(),
                    data,
                    m: vec![0.0; n],
                    v: vec![0.0; n],
                },
            );
        }
        Ok(&self.params[name])
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Connects a [`ParamStore`] to one [`Graph`]: each named parameter becomes a
/// leaf node exactly once per graph, so gradients for a parameter used in
/// several places accumulate on a single node.
pub struct Binder<'s, 'g> {
    store: &'s mut ParamStore,
    graph: &'g Graph,
    bound: BTreeMap<String, Var>,
}

impl<'s, 'g> Binder<'s, 'g> {
    pub fn new(store: &'s mut ParamStore, graph: &'g Graph) -> Binder<'s, 'g> {
        Binder {
            store,
            graph,
            bound: BTreeMap::new(),
        }
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    /// The graph leaf for `name`, creating the parameter (and the leaf) on
    /// first use within this graph.
    pub fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Var, TensorError> {
        if let Some(v) = self.bound.get(name) {
            if self.graph.shape(*v) != shape {
                return Err(TensorError::BadOp {
                    op: "param",
                    msg: format!(
                        "parameter {name} bound with shape {:?} but requested as {shape:?}",
                        self.graph.shape(*v)
                    ),
                });
            }
            return Ok(*v);
        }
        let entry = self.store.get_or_init(name, shape, init)?;
        let var = self.graph.param(shape, entry.data.clone());
        self.bound.insert(name.to_string(), var);
        Ok(var)
    }

    /// Collects per-parameter gradients after a backward pass. Bound
    /// parameters the loss never reached get zero gradients.
    pub fn gradients(&self, grads: &crate::graph::Gradients) -> GradMap {
        let mut out = GradMap::new();
        for (name, var) in &self.bound {
            let g = match grads.get(*var) {
                Some(g) => g.to_vec(),
                None => vec![0.0; self.store.get(name).map_or(0, |e| e.data.len())],
            };
            out.insert(name.clone(), g);
        }
        out
    }

    pub fn bound_names(&self) -> Vec<String> {
        self.bound.keys().cloned().collect()
    }
}

/// Gradients keyed by parameter name.
pub type GradMap = BTreeMap<String, Vec<f64>>;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> AdamConfig {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update over every parameter in the store. Requires a gradient
/// for each stored parameter; a missing one is an error naming it, since it
/// means the forward pass silently dropped part of the model.
pub fn adam_step(
    store: &mut ParamStore,
    grads: &GradMap,
    cfg: &AdamConfig,
) -> Result<(), TensorError> {
    for (name, entry) in &store.params {
        let g = grads
            .get(name)
            .ok_or_else(|| TensorError::MissingGradient {
                param: name.clone(),
            })?;
        if g.len() != entry.data.len() {
            return Err(TensorError::BadOp {
                op: "adam_step",
                msg: format!(
                    "gradient for {name} has {} values, parameter has {}",
                    g.len(),
                    entry.data.len()
                ),
            });
        }
    }
    for name in grads.keys() {
        if !store.params.contains_key(name) {
            return Err(TensorError::BadOp {
                op: "adam_step",
                msg: format!("gradient for unknown parameter {name}"),
            });
        }
    }
    store.step += 1;
    let t = store.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (name, entry) in store.params.iter_mut() {
        let g = &grads[name];
        for i in 0..entry.data.len() {
            entry.m[i] = cfg.beta1 * entry.m[i] + (1.0 - cfg.beta1) * g[i];
            entry.v[i] = cfg.beta2 * entry.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = entry.m[i] / bc1;
            let v_hat = entry.v[i] / bc2;
            entry.data[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_order_independent() {
        let mut s1 = ParamStore::new(42);
        let mut s2 = ParamStore::new(42);
        let a1 = s1
            .get_or_init("a", &[4, 4], Init::Uniform { fan_in: 4 })
            .unwrap()
            .data
            .clone();
        let _ = s1.get_or_init("b", &[2, 2], Init::Uniform { fan_in: 2 });
        // opposite creation order
        let _ = s2.get_or_init("b", &[2, 2], Init::Uniform { fan_in: 2 });
        let a2 = s2
            .get_or_init("a", &[4, 4], Init::Uniform { fan_in: 4 })
            .unwrap()
            .data
            .clone();
        assert_eq!(a1, a2);
        let b1 = s1.get("b").unwrap().data.clone();
        let b2 = s2.get("b").unwrap().data.clone();
        assert_eq!(b1, b2);
        assert_ne!(a1[0], b1[0]);
    }

    #[test]
    fn uniform_init_respects_the_fan_in_bound() {
        let mut s = ParamStore::new(7);
        let e = s
            .get_or_init("w", &[16, 100], Init::Uniform { fan_in: 100 })
            .unwrap();
        assert!(e.data.iter().all(|x| x.abs() <= 0.1));
        assert!(e.data.iter().any(|x| x.abs() > 0.01));
    }

    #[test]
    fn shape_conflicts_are_reported_by_name() {
        let mut s = ParamStore::new(0);
        s.get_or_init("w", &[2, 2], Init::Zeros).unwrap();
        let err = s.get_or_init("w", &[3, 2], Init::Zeros).unwrap_err();
        assert!(err.to_string().contains('w'), "{err}");
    }

    #[test]
    fn binder_returns_the_same_node_for_repeat_requests() {
        let mut s = ParamStore::new(0);
        let g = Graph::new();
        let mut b = Binder::new(&mut s, &g);
        let v1 = b.param("w", &[2, 2], Init::Zeros).unwrap();
        let v2 = b.param("w", &[2, 2], Init::Zeros).unwrap();
        assert_eq!(v1, v2);
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn binder_fills_zero_gradients_for_unreached_parameters() {
        let mut s = ParamStore::new(0);
        let g = Graph::new();
        let mut b = Binder::new(&mut s, &g);
        let w = b.param("w", &[1, 1], Init::Constant(2.0)).unwrap();
        let dead = b.param("dead", &[3, 1], Init::Zeros).unwrap();
        let _ = dead;
        let loss = g.sum(g.mul(w, w).unwrap());
        let grads = g.backward(loss).unwrap();
        let gm = b.gradients(&grads);
        assert_eq!(gm["w"], vec![4.0]);
        assert_eq!(gm["dead"], vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn adam_leaves_parameters_alone_under_zero_gradients() {
        let mut s = ParamStore::new(0);
        s.get_or_init("w", &[2, 1], Init::Constant(1.5)).unwrap();
        let mut gm = GradMap::new();
        gm.insert("w".into(), vec![0.0, 0.0]);
        adam_step(&mut s, &gm, &AdamConfig::default()).unwrap();
        assert_eq!(s.get("w").unwrap().data, vec![1.5, 1.5]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_adam_step_moves_by_roughly_lr_times_sign() {
        let mut s = ParamStore::new(0);
        s.get_or_init("w", &[2, 1], Init::Zeros).unwrap();
        let mut gm = GradMap::new();
        gm.insert("w".into(), vec![0.3, -7.0]);
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        adam_step(&mut s, &gm, &cfg).unwrap();
        let d = &s.get("w").unwrap().data;
        assert!((d[0] + 0.01).abs() < 1e-6, "{d:?}");
        assert!((d[1] - 0.01).abs() < 1e-6, "{d:?}");
    }

    #[test]
    fn adam_requires_a_gradient_for_every_parameter() {
        let mut s = ParamStore::new(0);
        s.get_or_init("w", &[1, 1], Init::Zeros).unwrap();
        s.get_or_init("lost", &[1, 1], Init::Zeros).unwrap();
        let mut gm = GradMap::new();
        gm.insert("w".into(), vec![0.1]);
        let err = adam_step(&mut s, &gm, &AdamConfig::default()).unwrap_err();
        assert!(err.to_string().contains("lost"), "{err}");
    }

    #[test]
    fn repeated_adam_runs_are_bit_identical() {
        let run = || {
            let mut s = ParamStore::new(9);
            s.get_or_init("w", &[4, 1], Init::Uniform { fan_in: 4 })
                .unwrap();
            for step in 0..25 {
                let g: Vec<f64> = s
                    .get("w")
                    .unwrap()
                    .data
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x * 0.5 + (step + i) as f64 * 0.01)
                    .collect();
                let mut gm = GradMap::new();
                gm.insert("w".into(), g);
                adam_step(&mut s, &gm, &AdamConfig::default()).unwrap();
            }
            s.get("w").unwrap().data.clone()
        };
        assert_eq!(run(), run());
    }
}
