//! `refvos` — command-line front end over the core library: generate
//! synthetic datasets, train the retrieval model, evaluate checkpoints,
//! answer ad-hoc queries against a scene, and render stored predictions
//! as overlay images.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use refvos_core::checkpoint::{load_checkpoint, save_checkpoint};
use refvos_core::config::{load_config, render_config, FileConfig};
use refvos_core::dataset::{
    load_dataset, load_predictions, predictions_path, save_dataset, save_predictions,
    FramePrediction, PredictionFile, SamplePrediction, StoredDataset, StoredMask, FORMAT_VERSION,
};
use refvos_core::eval::{evaluate, predict_sample, render_report, PredictedSample};
use refvos_core::generator::{
    generate_dataset, generate_scene_sample, Dataset, GenConfig, QuerySample, TemplateFamily,
};
use refvos_core::mask::BinaryMask;
use refvos_core::render::render_overlay;
use refvos_core::scene::Scene;
use refvos_core::train::{train, TrainFrame, TrainSample};

#[derive(Parser)]
#[command(
    name = "refvos",
    version,
    about = "Text-referred object segmentation and retrieval on synthetic videos"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Gen(GenArgs),
    /// Train a model on a dataset; write a checkpoint and a loss log.
    Train(TrainArgs),
    /// Evaluate a checkpoint; write a metric report and predictions.
    Eval(EvalArgs),
    /// Answer one query on one scene; write its track and overlays.
    Infer(InferArgs),
    /// Render stored predictions as overlay images.
    Render(RenderArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Generation seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of scenes (overrides the config file).
    #[arg(long)]
    scenes: Option<usize>,
    /// Configuration file; `[gen]` and `[run]` sections apply.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output dataset directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory produced by `gen`.
    #[arg(long)]
    dataset: PathBuf,
    /// Configuration file; `[model]` and `[train]` sections apply.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for weight init, shuffling, and augmentation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the checkpoint, loss log, and config echo.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory to evaluate on.
    #[arg(long)]
    dataset: PathBuf,
    /// Configuration file; the `[eval]` section applies.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the report and predictions.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory holding the scene.
    #[arg(long)]
    dataset: PathBuf,
    /// Scene index within the dataset.
    #[arg(long, default_value_t = 0)]
    scene: usize,
    /// Query text, e.g. "the red circle".
    #[arg(long)]
    query: String,
    /// Configuration file; the `[eval]` section applies.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the predicted track and overlays.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    /// Prediction file written by `eval` or `infer`.
    #[arg(long)]
    predictions: PathBuf,
    /// Dataset directory the predictions refer to.
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory for the overlay images.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => run_gen(args),
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
        Command::Infer(args) => run_infer(args),
        Command::Render(args) => run_render(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Loads the configuration file, or the built-in defaults when none is
/// given.
fn read_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        Some(p) => Ok(load_config(p)?),
        None => Ok(FileConfig::default()),
    }
}

// ---------------------------------------------------------------------
// gen

fn run_gen(args: GenArgs) -> Result<()> {
    let cfg = read_config(args.config.as_deref())?;
    let mut gen = cfg.gen.clone();
    if let Some(scenes) = args.scenes {
        gen.scenes = scenes;
    }
    gen.validate()?;
    let dataset = generate_parallel(&gen, args.seed, cfg.run.workers)?;
    save_dataset(&dataset, &args.out)
        .with_context(|| format!("writing dataset to {}", args.out.display()))?;
    println!("wrote {} scenes to {}", dataset.scenes.len(), args.out.display());
    Ok(())
}

/// Generates scenes with up to `workers` threads. Every scene draws from
/// its own random stream, so the output is identical for any worker
/// count.
fn generate_parallel(gen: &GenConfig, seed: u64, workers: usize) -> Result<Dataset> {
    let workers = workers.clamp(1, gen.scenes);
    if workers == 1 {
        return Ok(generate_dataset(gen, seed)?);
    }
    let mut slots: Vec<Option<(Scene, Vec<QuerySample>)>> = Vec::new();
    slots.resize_with(gen.scenes, || None);
    let chunk = gen.scenes.div_ceil(workers);
    thread::scope(|scope| -> refvos_core::Result<()> {
        let mut handles = Vec::with_capacity(workers);
        for (w, slice) in slots.chunks_mut(chunk).enumerate() {
            handles.push(scope.spawn(move || -> refvos_core::Result<()> {
                for (offset, slot) in slice.iter_mut().enumerate() {
                    *slot = Some(generate_scene_sample(gen, seed, w * chunk + offset)?);
                }
                Ok(())
            }));
        }
        for handle in handles {
            handle.join().expect("generation worker panicked")?;
        }
        Ok(())
    })?;
    let mut scenes = Vec::with_capacity(gen.scenes);
    let mut samples = Vec::new();
    for slot in slots {
        let (scene, scene_samples) = slot.expect("every scene index was generated");
        scenes.push(scene);
        samples.extend(scene_samples);
    }
    Ok(Dataset {
        config: gen.clone(),
        seed,
        scenes,
        samples,
    })
}

// ---------------------------------------------------------------------
// train

fn run_train(args: TrainArgs) -> Result<()> {
    let cfg = read_config(args.config.as_deref())?;
    let dataset = load_dataset(&args.dataset)
        .with_context(|| format!("loading dataset from {}", args.dataset.display()))?;
    let outcome = train(&dataset, cfg.model, &cfg.train, args.seed)?;

    fs::create_dir_all(&args.out)?;
    let ckpt = args.out.join("checkpoint.json");
    save_checkpoint(&outcome.params, &outcome.vocab, outcome.steps, &ckpt)
        .with_context(|| format!("writing checkpoint to {}", ckpt.display()))?;
    let mut log = String::new();
    for e in &outcome.log {
        log.push_str(&format!(
            "epoch = {} loss = {} lr = {} skipped = {} lr_reduced = {}\n",
            e.epoch, e.loss, e.learning_rate, e.skipped_samples, e.lr_reduced
        ));
    }
    fs::write(args.out.join("train_log.txt"), &log)?;
    fs::write(args.out.join("config.toml"), render_config(&cfg))?;

    let last = outcome.log.last().expect("training ran at least one epoch");
    println!(
        "trained {} epochs ({} steps), final loss {}",
        outcome.log.len(),
        outcome.steps,
        last.loss
    );
    println!("checkpoint written to {}", ckpt.display());
    Ok(())
}

// ---------------------------------------------------------------------
// eval

fn run_eval(args: EvalArgs) -> Result<()> {
    let cfg = read_config(args.config.as_deref())?;
    let (params, vocab, _) = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let dataset = load_dataset(&args.dataset)
        .with_context(|| format!("loading dataset from {}", args.dataset.display()))?;
    let (report, preds) = evaluate(&params, &vocab, &dataset, &cfg.eval)?;

    fs::create_dir_all(&args.out)?;
    let text = render_report(&report);
    fs::write(args.out.join("report.txt"), &text)?;
    save_predictions(&prediction_file(&dataset, &preds), &predictions_path(&args.out))?;
    print!("{text}");
    Ok(())
}

fn prediction_file(dataset: &StoredDataset, preds: &[PredictedSample]) -> PredictionFile {
    let predictions = dataset
        .manifest
        .samples
        .iter()
        .zip(preds)
        .map(|(s, p)| sample_prediction(s.scene_index, &s.text, p))
        .collect();
    PredictionFile {
        version: FORMAT_VERSION,
        predictions,
    }
}

fn sample_prediction(scene_index: usize, text: &str, pred: &PredictedSample) -> SamplePrediction {
    SamplePrediction {
        scene_index,
        text: text.to_string(),
        track_score: pred.score,
        frames: pred
            .masks
            .iter()
            .enumerate()
            .map(|(t, m)| FramePrediction {
                frame_index: t,
                mask: m.as_ref().map(StoredMask::from_mask),
            })
            .collect(),
    }
}

// ---------------------------------------------------------------------
// infer

fn run_infer(args: InferArgs) -> Result<()> {
    let cfg = read_config(args.config.as_deref())?;
    let (params, vocab, _) = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let dataset = load_dataset(&args.dataset)
        .with_context(|| format!("loading dataset from {}", args.dataset.display()))?;
    let scene = dataset.scenes.get(args.scene).with_context(|| {
        format!(
            "dataset has {} scenes, no index {}",
            dataset.scenes.len(),
            args.scene
        )
    })?;

    let sample = ad_hoc_sample(&dataset, args.scene, &args.query);
    let pred = predict_sample(&params, &vocab, &sample, &cfg.eval)?;

    fs::create_dir_all(&args.out)?;
    for (t, (frame, mask)) in scene.frames.iter().zip(&pred.masks).enumerate() {
        let Some(mask) = mask else { continue };
        overlay_frame(
            &frame.rgb,
            scene.width,
            scene.height,
            &frame.candidates,
            mask,
            &args.out.join(format!("frame_{t:02}.ppm")),
        )?;
    }
    let file = PredictionFile {
        version: FORMAT_VERSION,
        predictions: vec![sample_prediction(args.scene, &args.query, &pred)],
    };
    save_predictions(&file, &predictions_path(&args.out))?;

    // Retrieval always answers: even a query naming nothing in the scene
    // selects whichever track fits least badly, and the score says how
    // little that is.
    println!("query: {}", args.query);
    println!("track score = {}", pred.score);
    Ok(())
}

/// Pairs a stored scene with an arbitrary query so the model can answer
/// it. The ground-truth slot stays empty (ad-hoc queries have none) and
/// the family tag is copied from the scene's stored sample purely as
/// provenance; inference reads neither.
fn ad_hoc_sample(dataset: &StoredDataset, scene_index: usize, text: &str) -> TrainSample {
    let scene = &dataset.scenes[scene_index];
    let family = dataset
        .manifest
        .samples
        .iter()
        .find(|s| s.scene_index == scene_index)
        .map(|s| s.family)
        .unwrap_or(TemplateFamily::Attribute);
    TrainSample {
        scene_index,
        family,
        text: text.to_string(),
        width: scene.width,
        height: scene.height,
        frames: scene
            .frames
            .iter()
            .map(|f| TrainFrame {
                rgb: f.rgb.clone(),
                gt_mask: BinaryMask::empty(scene.width, scene.height),
                candidates: f.candidates.clone(),
            })
            .collect(),
    }
}

// ---------------------------------------------------------------------
// render

fn run_render(args: RenderArgs) -> Result<()> {
    let dataset = load_dataset(&args.dataset)
        .with_context(|| format!("loading dataset from {}", args.dataset.display()))?;
    let file = load_predictions(&args.predictions)
        .with_context(|| format!("loading predictions {}", args.predictions.display()))?;

    fs::create_dir_all(&args.out)?;
    let mut written = 0usize;
    for (i, pred) in file.predictions.iter().enumerate() {
        let scene = dataset.scenes.get(pred.scene_index).with_context(|| {
            format!(
                "prediction {i} references scene {} but the dataset has {}",
                pred.scene_index,
                dataset.scenes.len()
            )
        })?;
        for fp in &pred.frames {
            let Some(stored) = &fp.mask else { continue };
            let frame = scene.frames.get(fp.frame_index).with_context(|| {
                format!(
                    "prediction {i} references frame {} but scene {} has {}",
                    fp.frame_index,
                    pred.scene_index,
                    scene.frames.len()
                )
            })?;
            let mask = stored.to_mask()?;
            overlay_frame(
                &frame.rgb,
                scene.width,
                scene.height,
                &frame.candidates,
                &mask,
                &args.out.join(format!("sample_{i:03}_frame_{:02}.ppm", fp.frame_index)),
            )?;
            written += 1;
        }
    }
    println!("wrote {written} overlays to {}", args.out.display());
    Ok(())
}

/// Writes one overlay image: every candidate tinted, the selected mask
/// outlined. A selection matching no candidate (foreign predictions) is
/// drawn on its own.
fn overlay_frame(
    rgb: &[u8],
    width: u32,
    height: u32,
    candidates: &[BinaryMask],
    selected: &BinaryMask,
    path: &Path,
) -> Result<()> {
    let mut masks = candidates.to_vec();
    let mut scores = vec![0.0; masks.len()];
    match masks.iter().position(|c| c == selected) {
        Some(i) => scores[i] = 1.0,
        None => {
            masks.push(selected.clone());
            scores.push(1.0);
        }
    }
    render_overlay(rgb, width, height, &masks, &scores, path)
        .with_context(|| format!("writing overlay {}", path.display()))?;
    Ok(())
}
