//! `autozoom reason`: train the attention model on the generated toy
//! task, or report a checkpoint's top-1 accuracy.

use std::path::{Path, PathBuf};

use autozoom::error::{Error, Result};
use autozoom::io::write_atomic;
use autozoom::locator::DetectionSet;
use autozoom::reason::checkpoint::{load_checkpoint, save_checkpoint};
use autozoom::reason::train::{argmax_row, frames_to_clip, frames_to_rows, train, TrainParams};
use autozoom::reason::{model_logits, AttentionModel, Model, ReasonConfig, Variant};
use autozoom::schedule::schedule_keyframes;
use autozoom::synth::{make_toy_dataset, toy_reason_config, toy_zoom_params, SyntheticClip};
use autozoom::tensor::{FlopCounter, Tensor};
use autozoom::zoom::{auto_zoom_clip, build_track};
use clap::{Args, Subcommand};

use crate::clip::{load_manifest_checked, read_frames};
use crate::config::{self, CommonOpts};

#[derive(Args, Debug)]
pub struct ReasonArgs {
    #[command(subcommand)]
    pub mode: ReasonMode,
}

#[derive(Subcommand, Debug)]
pub enum ReasonMode {
    /// Fit the attention model to the toy motion dataset.
    Train(TrainArgs),
    /// Report top-1 accuracy of a checkpoint.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Checkpoint output path.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Loss-curve output path (default: `<out>.loss.txt`).
    #[arg(long, value_name = "PATH")]
    pub loss_curve: Option<PathBuf>,
    /// Toy dataset size; 80% trains, 20% is held out.
    #[arg(long, default_value_t = 40)]
    pub clips: usize,
    #[arg(long, default_value_t = 800)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.005)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[command(flatten)]
    pub common: CommonOpts,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    /// Toy dataset size; must match the training run to keep the held-out
    /// split held out.
    #[arg(long, default_value_t = 40)]
    pub clips: usize,
    /// Evaluate one already-zoomed clip instead of the toy split.
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    /// True class index for --manifest.
    #[arg(long, value_name = "N")]
    pub label: Option<usize>,
    /// Write one `label logit...` line per sample here.
    #[arg(long, value_name = "PATH")]
    pub logits: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonOpts,
}

/// Zoom one toy clip and shape it for the model variant.
fn pipeline_input(clip: &SyntheticClip, variant: Variant) -> Result<Tensor> {
    let zoom = toy_zoom_params();
    let n = clip.gt_track.frame_count();
    let keys = schedule_keyframes(n, zoom.keyframe_fraction)?;
    let mut set = DetectionSet::new();
    for &k in &keys.key_indices {
        set.push(k, clip.gt_track.entry(k)?.bbox);
    }
    let track = build_track(&set, n, clip.gt_track.frame_size(), &zoom)?;
    let zoomed = auto_zoom_clip(&clip.frames, &track, &zoom)?;
    match variant {
        Variant::Attention => frames_to_rows(&zoomed.frames),
        Variant::Conv2Plus1 | Variant::Conv3d => frames_to_clip(&zoomed.frames),
    }
}

fn toy_split(
    clips: usize,
    seed: u64,
    variant: Variant,
) -> Result<(Vec<(Tensor, usize)>, Vec<(Tensor, usize)>)> {
    let (train_clips, test_clips) = make_toy_dataset(clips, seed)?;
    let prep = |set: &[SyntheticClip]| -> Result<Vec<(Tensor, usize)>> {
        set.iter()
            .map(|c| Ok((pipeline_input(c, variant)?, c.label)))
            .collect()
    };
    Ok((prep(&train_clips)?, prep(&test_clips)?))
}

fn accuracy(
    model: &Model,
    cfg: &ReasonConfig,
    data: &[(Tensor, usize)],
    logits_out: Option<&Path>,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("empty evaluation set"));
    }
    let mut flops = FlopCounter::new();
    let mut hits = 0usize;
    let mut report = String::new();
    for (input, label) in data {
        let logits = model_logits(model, cfg, input, &mut flops)?;
        if argmax_row(&logits) == *label {
            hits += 1;
        }
        if logits_out.is_some() {
            report.push_str(&format!("{label}"));
            for v in &logits.data {
                report.push_str(&format!(" {v}"));
            }
            report.push('\n');
        }
    }
    if let Some(path) = logits_out {
        write_atomic(path, report.as_bytes())?;
    }
    Ok(hits as f64 / data.len() as f64)
}

pub fn run_train(args: &TrainArgs) -> Result<()> {
    let run = config::resolve(&args.common)?;
    if run.variant != Variant::Attention {
        return Err(Error::invalid(format!(
            "training supports the attention variant, not {}",
            run.variant.name()
        )));
    }
    let cfg = toy_reason_config();
    let (train_data, test_data) = toy_split(args.clips, run.seed, Variant::Attention)?;
    let mut model = AttentionModel::init(&cfg, run.seed)?;
    let params = TrainParams {
        lr: args.lr,
        momentum: args.momentum,
        epochs: args.epochs,
    };
    let report = train(&mut model, &cfg, &train_data, &params)?;

    let model = Model::Attention(model);
    save_checkpoint(&args.out, &cfg, &model)?;
    let curve_path = args
        .loss_curve
        .clone()
        .unwrap_or_else(|| loss_curve_default(&args.out));
    let mut curve = String::new();
    for loss in &report.losses {
        curve.push_str(&format!("{loss}\n"));
    }
    write_atomic(&curve_path, curve.as_bytes())?;

    let train_acc = accuracy(&model, &cfg, &train_data, None)?;
    let test_acc = accuracy(&model, &cfg, &test_data, None)?;
    println!(
        "trained {} clips for {} epochs  loss {:.4} -> {:.4}",
        train_data.len(),
        args.epochs,
        report.losses[0],
        report.losses[report.losses.len() - 1]
    );
    println!("train accuracy {train_acc:.3}  held-out accuracy {test_acc:.3}");
    println!(
        "checkpoint {}  loss curve {}",
        args.out.display(),
        curve_path.display()
    );
    Ok(())
}

fn loss_curve_default(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".to_string());
    name.push_str(".loss.txt");
    checkpoint.with_file_name(name)
}

pub fn run_eval(args: &EvalArgs) -> Result<()> {
    let run = config::resolve(&args.common)?;
    let (cfg, model) = load_checkpoint(&args.checkpoint)?;
    let data = match &args.manifest {
        Some(path) => {
            let label = args
                .label
                .ok_or_else(|| Error::invalid("--manifest needs --label"))?;
            let manifest = load_manifest_checked(path)?;
            let frames = read_frames(&manifest)?;
            let input = match cfg.variant {
                Variant::Attention => frames_to_rows(&frames)?,
                Variant::Conv2Plus1 | Variant::Conv3d => frames_to_clip(&frames)?,
            };
            vec![(input, label)]
        }
        None => toy_split(args.clips, run.seed, cfg.variant)?.1,
    };
    let acc = accuracy(&model, &cfg, &data, args.logits.as_deref())?;
    println!("samples {}  accuracy {acc:.3}", data.len());
    Ok(())
}

pub fn run(args: &ReasonArgs) -> Result<()> {
    match &args.mode {
        ReasonMode::Train(a) => run_train(a),
        ReasonMode::Eval(a) => run_eval(a),
    }
}
