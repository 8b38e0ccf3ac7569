//! Single-core training: shuffled mini-batches, Adam with one step-down
//! learning-rate drop, per-epoch checkpoints, and a running `loss.csv`.
//!
//! Checkpoint layout under the output directory: `init/` (the untouched
//! starting point), `epoch_NNN/` after each epoch, `best/` (lowest
//! validation loss so far), `final/` (always written, even for zero
//! epochs). Every checkpoint embeds the full model, scene, and train
//! configuration, so evaluation needs nothing but the directory.

use crate::config::ModelConfig;
use crate::forward::Model;
use crate::loss::{build_loss, ground_truth, GroundTruth};
use crate::ModelError;
use conrec_scene::{Sample, SceneConfig};
use conrec_tensor::checkpoint::{load_checkpoint, save_checkpoint};
use conrec_tensor::store::{adam_step, AdamConfig, Binder, GradMap, ParamStore};
use conrec_tensor::Graph;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write as _;
use std::path::Path;

/// Offset mixed into the store seed for the shuffle stream, so parameter
/// initialization and batch order are independent draws.
const SHUFFLE_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

/// Optimization schedule. The learning rate is `lr` until `lr_drop_epoch`,
/// then `lr * lr_drop_factor` from that epoch on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_drop_epoch: usize,
    pub lr_drop_factor: f64,
    /// Fraction of the dataset (taken from the end) held out for
    /// validation; the count is rounded down.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: 30,
            batch_size: 8,
            lr: 1e-4,
            lr_drop_epoch: 20,
            lr_drop_factor: 0.1,
            val_fraction: 0.125,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(ModelError::Config(format!(
                "lr must be finite and positive, got {}",
                self.lr
            )));
        }
        if !(self.lr_drop_factor.is_finite() && self.lr_drop_factor > 0.0) {
            return Err(ModelError::Config(format!(
                "lr_drop_factor must be finite and positive, got {}",
                self.lr_drop_factor
            )));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(ModelError::Config(format!(
                "val_fraction must lie in [0, 1), got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

/// The full configuration embedded verbatim in every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedConfig {
    pub model: ModelConfig,
    pub scene: SceneConfig,
    pub train: TrainConfig,
}

/// Losses for one epoch; `val_loss` equals `train_loss` when no samples
/// are held out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub stats: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
    pub train_samples: usize,
    pub val_samples: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Binds every parameter once so a fresh store holds the full model before
/// the first checkpoint is written.
fn materialize(model: &Model, store: &mut ParamStore, sample: &Sample) -> Result<(), ModelError> {
    let g = Graph::new();
    let mut b = Binder::new(store, &g);
    model.forward(&mut b, sample)?;
    Ok(())
}

/// One optimizer step over a batch: averaged gradients, one Adam update.
/// Returns the mean (weighted total) loss *before* the update. A non-finite
/// loss or gradient aborts with [`ModelError::Diverged`] without touching
/// the parameters; `epoch` only labels that error.
pub fn optimize_batch(
    model: &Model,
    store: &mut ParamStore,
    batch: &[(&Sample, &GroundTruth)],
    lr: f64,
    epoch: usize,
) -> Result<f64, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::Data("cannot optimize an empty batch".into()));
    }
    let mut acc = GradMap::new();
    let mut loss_sum = 0.0;
    for (sample, gt) in batch {
        let g = Graph::new();
        let mut b = Binder::new(store, &g);
        let fp = model.forward(&mut b, sample)?;
        let loss = build_loss(&g, &fp, gt, &model.config.loss)?;
        loss_sum += g.scalar(loss.total);
        let grads = g.backward(loss.total)?;
        for (name, grad) in b.gradients(&grads) {
            let slot = acc.entry(name).or_insert_with(|| vec![0.0; grad.len()]);
            for (a, x) in slot.iter_mut().zip(&grad) {
                *a += x;
            }
        }
    }
    let mean = loss_sum / batch.len() as f64;
    let scale = 1.0 / batch.len() as f64;
    let mut finite = mean.is_finite();
    for grad in acc.values_mut() {
        for x in grad.iter_mut() {
            *x *= scale;
            finite &= x.is_finite();
        }
    }
    if !finite {
        return Err(ModelError::Diverged {
            epoch,
            step: store.step,
        });
    }
    adam_step(store, &acc, &AdamConfig { lr, ..AdamConfig::default() })?;
    Ok(mean)
}

/// Mean weighted loss over `samples` without touching the parameters.
fn evaluate_loss(
    model: &Model,
    store: &mut ParamStore,
    samples: &[Sample],
    gts: &[GroundTruth],
) -> Result<f64, ModelError> {
    let mut sum = 0.0;
    for (sample, gt) in samples.iter().zip(gts) {
        let g = Graph::new();
        let mut b = Binder::new(store, &g);
        let fp = model.forward(&mut b, sample)?;
        let loss = build_loss(&g, &fp, gt, &model.config.loss)?;
        sum += g.scalar(loss.total);
    }
    Ok(sum / samples.len() as f64)
}

fn write_loss_csv(out_dir: &Path, stats: &[EpochStats]) -> Result<(), ModelError> {
    let path = out_dir.join("loss.csv");
    let mut tmp = tempfile::NamedTempFile::new_in(out_dir).map_err(io_err(&path))?;
    writeln!(tmp, "epoch,train_loss,val_loss,lr").map_err(io_err(&path))?;
    for s in stats {
        writeln!(tmp, "{},{},{},{}", s.epoch, s.train_loss, s.val_loss, s.lr)
            .map_err(io_err(&path))?;
    }
    tmp.persist(&path).map_err(|e| ModelError::Io {
        path: path.clone(),
        source: e.error,
    })?;
    Ok(())
}

/// Trains `model` on `samples`, writing checkpoints and `loss.csv` under
/// `out_dir`. The last `floor(n * val_fraction)` samples are held out for
/// validation; with none held out, validation loss falls back to the
/// training loss.
pub fn train(
    model: &Model,
    samples: &[Sample],
    cfg: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainSummary, ModelError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(ModelError::Data("cannot train on an empty dataset".into()));
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let gts: Vec<GroundTruth> = samples
        .iter()
        .map(|s| ground_truth(model, s))
        .collect::<Result<_, _>>()?;
    let n_val = (samples.len() as f64 * cfg.val_fraction).floor() as usize;
    let n_train = samples.len() - n_val;
    let embedded = serde_json::to_value(EmbeddedConfig {
        model: model.config.clone(),
        scene: model.scene_config.clone(),
        train: cfg.clone(),
    })
    .expect("config serializes");

    let mut store = ParamStore::new(cfg.seed);
    materialize(model, &mut store, &samples[0])?;
    save_checkpoint(&out_dir.join("init"), &store, &embedded)?;
    log::info!(
        "training on {n_train} samples ({n_val} held out), {} parameters",
        store.total_values()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(SHUFFLE_SEED_OFFSET));
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut stats: Vec<EpochStats> = Vec::new();
    let mut best: Option<(usize, f64)> = None;

    for epoch in 0..cfg.epochs {
        let lr_now = if epoch >= cfg.lr_drop_epoch {
            cfg.lr * cfg.lr_drop_factor
        } else {
            cfg.lr
        };
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&Sample, &GroundTruth)> =
                chunk.iter().map(|&i| (&samples[i], &gts[i])).collect();
            let mean = optimize_batch(model, &mut store, &batch, lr_now, epoch)?;
            weighted += mean * chunk.len() as f64;
        }
        let train_loss = weighted / n_train as f64;
        let val_loss = if n_val == 0 {
            train_loss
        } else {
            evaluate_loss(model, &mut store, &samples[n_train..], &gts[n_train..])?
        };
        stats.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            lr: lr_now,
        });
        save_checkpoint(&out_dir.join(format!("epoch_{epoch:03}")), &store, &embedded)?;
        if best.map_or(true, |(_, v)| val_loss < v) {
            best = Some((epoch, val_loss));
            save_checkpoint(&out_dir.join("best"), &store, &embedded)?;
        }
        write_loss_csv(out_dir, &stats)?;
        log::info!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6} lr {lr_now:.1e}");
    }

    save_checkpoint(&out_dir.join("final"), &store, &embedded)?;
    write_loss_csv(out_dir, &stats)?;
    Ok(TrainSummary {
        stats,
        best_epoch: best.map(|(e, _)| e),
        train_samples: n_train,
        val_samples: n_val,
    })
}

/// Loads a checkpoint directory back into a ready-to-run model: parameters,
/// plus the embedded model and scene configuration.
pub fn load_model(dir: &Path) -> Result<(Model, ParamStore, EmbeddedConfig), ModelError> {
    let (store, meta) = load_checkpoint(dir)?;
    let embedded: EmbeddedConfig = serde_json::from_value(meta.config).map_err(|e| {
        ModelError::Data(format!(
            "checkpoint {} carries no readable embedded config: {e}",
            dir.display()
        ))
    })?;
    let model = Model::new(embedded.model.clone(), embedded.scene.clone())?;
    Ok((model, store, embedded))
}
