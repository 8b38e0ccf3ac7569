//! Rough timing probe: one forward + backward pass at the default model
//! size, and the implied wall-clock cost of a full training run.

use conrec_model::{build_loss, ground_truth, Model, ModelConfig};
use conrec_scene::{generate_samples, SceneAssets, SceneConfig};
use conrec_tensor::store::{Binder, ParamStore};
use conrec_tensor::Graph;
use std::time::Instant;

fn main() {
    let scene_cfg = SceneConfig::default();
    let assets = SceneAssets::build(&scene_cfg).unwrap();
    let samples = generate_samples(&assets, &scene_cfg, 7, 4).unwrap();
    let model = Model::new(ModelConfig::default(), scene_cfg).unwrap();
    let gts: Vec<_> = samples
        .iter()
        .map(|s| ground_truth(&model, s).unwrap())
        .collect();
    let mut store = ParamStore::new(7);

    let mut pass = |store: &mut ParamStore, i: usize| {
        let g = Graph::new();
        let mut b = Binder::new(store, &g);
        let fp = model.forward(&mut b, &samples[i]).unwrap();
        let loss = build_loss(&g, &fp, &gts[i], &model.config.loss).unwrap();
        let grads = g.backward(loss.total).unwrap();
        let _ = b.gradients(&grads);
    };

    pass(&mut store, 0); // warm-up; also materializes the parameters
    println!("params: {}", store.total_values());

    let reps = 8;
    let t = Instant::now();
    for i in 0..reps {
        pass(&mut store, i % samples.len());
    }
    let per = t.elapsed().as_secs_f64() / reps as f64;
    // 256 samples, batch 8, 30 epochs: 7680 training passes plus one
    // forward-only validation sweep of 32 samples per epoch.
    println!("fwd+bwd per sample: {:.1} ms", per * 1e3);
    println!(
        "256-sample x 30-epoch training estimate: {:.1} min",
        per * (7680.0 + 960.0) / 60.0
    );
}
