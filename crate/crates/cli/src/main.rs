//! `conrec`: generate synthetic contact scenes, train the reconstruction
//! pipeline, evaluate checkpoints, and probe occlusion sensitivity.

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use conrec_eval::{
    evaluate_output, evaluate_sample, gt_as_prediction, sensitivity_map, write_pgm, EvalReport,
};
use conrec_model::{load_model, train, Model, ModelConfig, TrainConfig};
use conrec_scene::{generate_samples, read_dataset, write_dataset, SceneAssets, SceneConfig};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "conrec",
    version,
    about = "Joint human-object reconstruction from synthetic contact scenes"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a dataset of synthetic scenes.
    Gen(GenArgs),
    /// Train the pipeline on a generated dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset and write a JSON report.
    Eval(EvalArgs),
    /// Occlusion-sensitivity map of one sample under a checkpoint.
    Sensitivity(SensitivityArgs),
    /// Print the summary of a previously written report.
    Report(ReportArgs),
}

#[derive(clap::Args)]
struct GenArgs {
    /// Scene configuration JSON; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of samples.
    #[arg(long, default_value_t = 256)]
    num: usize,
    /// Base seed; sample i draws from seed + i.
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Dataset directory written by `gen`.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoints and loss.csv.
    #[arg(long)]
    out: PathBuf,
    /// Model configuration JSON; built-in defaults when omitted.
    #[arg(long)]
    model_config: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    /// Epoch at which the learning rate drops.
    #[arg(long, default_value_t = 20)]
    lr_drop_epoch: usize,
    /// Factor applied to the learning rate at the drop.
    #[arg(long, default_value_t = 0.1)]
    lr_drop_factor: f64,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    /// Fraction of samples (from the end) held out for validation.
    #[arg(long, default_value_t = 0.125)]
    val_fraction: f64,
    /// Parameter-initialization and shuffle seed.
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Dataset directory to evaluate on.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint directory (ignored with --use-gt).
    #[arg(long, required_unless_present = "use_gt")]
    ckpt: Option<PathBuf>,
    /// Output report JSON path.
    #[arg(long)]
    report: PathBuf,
    /// Score the ground truth against itself instead of running a model.
    /// A correct pipeline scores zero Chamfer distance and perfect derived
    /// contact; anything else means the protocol itself is broken.
    #[arg(long)]
    use_gt: bool,
}

#[derive(clap::Args)]
struct SensitivityArgs {
    /// Checkpoint directory.
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset directory holding the probed sample.
    #[arg(long)]
    data: PathBuf,
    /// Index of the sample to probe.
    #[arg(long, default_value_t = 0)]
    sample: usize,
    /// Occlusion window side length in pixels.
    #[arg(long, default_value_t = 8)]
    patch: usize,
    /// Window step in pixels.
    #[arg(long, default_value_t = 8)]
    stride: usize,
    /// Value written into occluded pixels (all channels).
    #[arg(long, default_value_t = 0.0)]
    fill: f32,
    /// Output directory for sensitivity.json and sensitivity.pgm.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct ReportArgs {
    /// Report JSON written by `eval`.
    #[arg(long = "in")]
    input: PathBuf,
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Gen(a) => gen(a),
        Cmd::Train(a) => train_cmd(a),
        Cmd::Eval(a) => eval_cmd(a),
        Cmd::Sensitivity(a) => sensitivity_cmd(a),
        Cmd::Report(a) => report_cmd(a),
    };
    if let Err(e) = result {
        eprintln!("error: {}", render_chain(&e));
        std::process::exit(1);
    }
}

/// One-line rendering of an error chain. Library errors here often embed
/// their source's text in their own Display, which `anyhow`'s alternate
/// form would then print twice; collapse those repeats.
fn render_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let part = cause.to_string();
        if out.ends_with(&part) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&part);
    }
    out
}

/// Writes `text` to `path` through a temp file in the same directory, so a
/// crash never leaves a half-written artifact.
fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let dir = dir.unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot stage a temp file for {}", path.display()))?;
    tmp.write_all(text.as_bytes())
        .with_context(|| format!("cannot write {}", path.display()))?;
    tmp.persist(path)
        .with_context(|| format!("cannot replace {}", path.display()))?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {what} {}", path.display()))
}

fn gen(a: GenArgs) -> Result<()> {
    let config: SceneConfig = match &a.config {
        Some(path) => read_json(path, "scene config")?,
        None => SceneConfig::default(),
    };
    config.validate()?;
    let assets = SceneAssets::build(&config).context("cannot build scene assets")?;
    let samples = generate_samples(&assets, &config, a.seed, a.num)
        .context("cannot generate samples")?;
    write_dataset(&a.out, &samples, &config, a.seed)
        .with_context(|| format!("cannot write dataset {}", a.out.display()))?;
    let contacting = samples
        .iter()
        .filter(|s| s.contact_human.contact_count() > 0)
        .count();
    println!(
        "wrote {} samples ({} contacting) to {}",
        samples.len(),
        contacting,
        a.out.display()
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let (meta, samples) = read_dataset(&a.data)
        .with_context(|| format!("cannot read dataset {}", a.data.display()))?;
    let model_config: ModelConfig = match &a.model_config {
        Some(path) => read_json(path, "model config")?,
        None => ModelConfig::default(),
    };
    let model = Model::new(model_config, meta.config)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        lr: a.lr,
        lr_drop_epoch: a.lr_drop_epoch,
        lr_drop_factor: a.lr_drop_factor,
        val_fraction: a.val_fraction,
        seed: a.seed,
    };
    let summary = train(&model, &samples, &cfg, &a.out).context("training failed")?;
    match summary.stats.last() {
        Some(last) => println!(
            "trained {} epochs on {} samples ({} held out): train {:.6}, val {:.6}, best epoch {}",
            summary.stats.len(),
            summary.train_samples,
            summary.val_samples,
            last.train_loss,
            last.val_loss,
            summary.best_epoch.expect("stats imply a best epoch"),
        ),
        None => println!(
            "wrote the initial checkpoint for {} samples to {} (0 epochs requested)",
            summary.train_samples + summary.val_samples,
            a.out.display()
        ),
    }
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let (meta, samples) = read_dataset(&a.data)
        .with_context(|| format!("cannot read dataset {}", a.data.display()))?;
    let mut evals = Vec::with_capacity(samples.len());
    if a.use_gt {
        let tau = meta.config.contact_threshold;
        for (i, sample) in samples.iter().enumerate() {
            evals.push(
                evaluate_output(&gt_as_prediction(sample), sample, tau, i)
                    .with_context(|| format!("cannot evaluate sample {i}"))?,
            );
        }
    } else {
        let ckpt = a.ckpt.as_ref().expect("clap enforces --ckpt without --use-gt");
        let (model, mut store, _cfg) = load_model(ckpt)
            .with_context(|| format!("cannot load checkpoint {}", ckpt.display()))?;
        for (i, sample) in samples.iter().enumerate() {
            evals.push(
                evaluate_sample(&model, &mut store, sample, i)
                    .with_context(|| format!("cannot evaluate sample {i}"))?,
            );
            log::debug!("evaluated sample {}/{}", i + 1, samples.len());
        }
    }
    let tau = meta.config.contact_threshold;
    let report = EvalReport::new(tau, evals).context("cannot aggregate the evaluation")?;
    let text = serde_json::to_string_pretty(&report).context("cannot serialize the report")?;
    write_atomic(&a.report, &text)?;
    print_aggregate(&report);
    println!("report written to {}", a.report.display());
    Ok(())
}

fn print_aggregate(report: &EvalReport) {
    let agg = &report.aggregate;
    let opt = |v: Option<f64>| match v {
        Some(x) => format!("{x:.3}"),
        None => "skipped".into(),
    };
    println!("samples: {}", agg.samples);
    println!(
        "chamfer human (cm):  initial {:.3} -> refined {:.3}",
        agg.cd_human_initial_cm, agg.cd_human_refined_cm
    );
    println!(
        "chamfer object (cm): initial {:.3} -> refined {:.3}",
        agg.cd_object_initial_cm, agg.cd_object_refined_cm
    );
    println!(
        "contact est (human):  precision {} recall {} f1 {}",
        opt(agg.contact_est_human.precision),
        opt(agg.contact_est_human.recall),
        opt(agg.contact_est_human.f1)
    );
    println!(
        "contact est (object): precision {} recall {} f1 {}",
        opt(agg.contact_est_object.precision),
        opt(agg.contact_est_object.recall),
        opt(agg.contact_est_object.f1)
    );
    println!(
        "contact rec (human):  precision {} recall {} f1 {}",
        opt(agg.contact_rec.precision),
        opt(agg.contact_rec.recall),
        opt(agg.contact_rec.f1)
    );
}

fn sensitivity_cmd(a: SensitivityArgs) -> Result<()> {
    let (_, samples) = read_dataset(&a.data)
        .with_context(|| format!("cannot read dataset {}", a.data.display()))?;
    let sample = samples.get(a.sample).with_context(|| {
        format!(
            "sample index {} out of range: the dataset has {} samples",
            a.sample,
            samples.len()
        )
    })?;
    let (model, mut store, _cfg) = load_model(&a.ckpt)
        .with_context(|| format!("cannot load checkpoint {}", a.ckpt.display()))?;
    let map = sensitivity_map(&model, &mut store, sample, a.patch, a.stride, a.fill)
        .context("cannot compute the sensitivity map")?;
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    let json_path = a.out.join("sensitivity.json");
    let text = serde_json::to_string_pretty(&serde_json::json!({
        "sample_index": a.sample,
        "map": &map,
    }))
    .context("cannot serialize the sensitivity map")?;
    write_atomic(&json_path, &text)?;
    let pgm_path = a.out.join("sensitivity.pgm");
    write_pgm(&pgm_path, &map)
        .with_context(|| format!("cannot write {}", pgm_path.display()))?;
    println!(
        "sensitivity over a {}x{} grid (base object chamfer {:.3} cm) written to {}",
        map.rows,
        map.cols,
        map.base_object_cd_cm,
        a.out.display()
    );
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let report: EvalReport = read_json(&a.input, "report")?;
    print_aggregate(&report);
    println!("conventions: {}", report.conventions.chamfer);
    println!("  alignment: {}", report.conventions.alignment);
    println!("  skip rule: {}", report.conventions.skip_rule);
    Ok(())
}
