//! `autozoom synth`: generate a synthetic clip with ground truth and a
//! detection file, in the same formats the pipeline consumes.

use std::fs;
use std::path::PathBuf;

use autozoom::error::{Error, Result};
use autozoom::io::{write_detections, write_manifest, write_ppm, write_track, Manifest};
use autozoom::locator::DetectionSet;
use autozoom::schedule::schedule_keyframes;
use autozoom::synth::{
    gen_trajectory, perturb_detections, render_clip, TrajectoryKind, TrajectorySpec,
};
use clap::Args;

use crate::config::{self, CommonOpts};

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 60)]
    pub frames: usize,
    #[arg(long, default_value_t = 320)]
    pub width: u32,
    #[arg(long, default_value_t = 240)]
    pub height: u32,
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    /// Actor size in pixels; overrides --occupancy.
    #[arg(long, value_name = "W,H")]
    pub actor: Option<String>,
    /// Size the actor to this fraction of the frame area (2:1 aspect).
    #[arg(long, value_name = "F")]
    pub occupancy: Option<f64>,
    /// Trajectory kind: linear, circular, or sinusoidal.
    #[arg(long, default_value = "linear")]
    pub trajectory: String,
    /// Velocity in px/frame for linear trajectories.
    #[arg(long, value_name = "VX,VY", default_value = "2,1")]
    pub velocity: String,
    /// Circle radius in px for circular trajectories.
    #[arg(long, value_name = "PX", default_value_t = 60.0)]
    pub radius: f64,
    /// Turn per frame in radians for circular trajectories.
    #[arg(long, value_name = "RAD", default_value_t = 0.05)]
    pub angular_step: f64,
    /// Vertical amplitude in px for sinusoidal trajectories.
    #[arg(long, value_name = "PX", default_value_t = 10.0)]
    pub amplitude: f64,
    /// Period in frames for sinusoidal trajectories.
    #[arg(long, value_name = "FRAMES", default_value_t = 30.0)]
    pub period: f64,
    /// Start center.
    #[arg(long, value_name = "X,Y", default_value = "60,60")]
    pub start: String,
    /// Background noise amplitude, in [0, 0.5).
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Fraction of key-frame detections to drop.
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    /// Uniform center jitter in px applied to surviving detections.
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    /// Number of key-frame detections replaced by far-off outliers.
    #[arg(long, default_value_t = 0)]
    pub outliers: usize,
    /// Outlier displacement in px.
    #[arg(long, default_value_t = 120.0)]
    pub outlier_offset: f64,
    #[command(flatten)]
    pub common: CommonOpts,
}

fn parse_pair(s: &str, what: &str) -> Result<(f64, f64)> {
    let mut it = s.split(',').map(str::trim);
    let parse = |tok: Option<&str>| -> Result<f64> {
        tok.and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::invalid(format!("{what} must be `X,Y`, got {s:?}")))
    };
    let x = parse(it.next())?;
    let y = parse(it.next())?;
    if it.next().is_some() {
        return Err(Error::invalid(format!("{what} must be `X,Y`, got {s:?}")));
    }
    Ok((x, y))
}

/// Actor dimensions filling `occupancy` of the frame at a 2:1 aspect.
/// Rounding keeps the realized area within one actor row of the target.
fn actor_for_occupancy(occupancy: f64, width: u32, height: u32) -> Result<(u32, u32)> {
    if !(occupancy.is_finite() && occupancy > 0.0 && occupancy < 1.0) {
        return Err(Error::invalid(format!(
            "occupancy {occupancy} outside (0, 1)"
        )));
    }
    let area = occupancy * width as f64 * height as f64;
    let h = (area / 2.0).sqrt().round().max(1.0);
    let w = (area / h).round().max(1.0);
    Ok((w as u32, h as u32))
}

pub fn run(args: &SynthArgs) -> Result<()> {
    let cfg = config::resolve(&args.common)?;
    let actor = match (&args.actor, args.occupancy) {
        (Some(s), _) => {
            let (w, h) = parse_pair(s, "--actor")?;
            (w as u32, h as u32)
        }
        (None, Some(occ)) => actor_for_occupancy(occ, args.width, args.height)?,
        (None, None) => (24, 16),
    };

    let kind = match args.trajectory.as_str() {
        "linear" => TrajectoryKind::Linear {
            velocity: parse_pair(&args.velocity, "--velocity")?,
        },
        "circular" => TrajectoryKind::Circular {
            radius: args.radius,
            angular_step: args.angular_step,
        },
        "sinusoidal" => TrajectoryKind::Sinusoidal {
            amplitude: args.amplitude,
            period: args.period,
        },
        other => {
            return Err(Error::invalid(format!(
                "unknown trajectory {other:?}; expected linear, circular, or sinusoidal"
            )))
        }
    };
    let spec = TrajectorySpec {
        kind,
        start: parse_pair(&args.start, "--start")?,
        n_frames: args.frames,
        bounds: (args.width as f64, args.height as f64),
    };
    let traj = gen_trajectory(&spec)?;
    let clip = render_clip(
        &traj,
        actor,
        (args.width, args.height),
        args.noise,
        cfg.seed,
    )?;

    let frames_dir = args.out.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(frames_dir.clone(), e))?;
    let mut frame_paths = Vec::with_capacity(clip.frames.len());
    for (i, frame) in clip.frames.iter().enumerate() {
        let path = frames_dir.join(format!("frame_{i:06}.ppm"));
        write_ppm(&path, frame)?;
        frame_paths.push(path);
    }
    let manifest = Manifest {
        width: args.width,
        height: args.height,
        fps: args.fps,
        frame_paths,
    };
    write_manifest(&args.out.join("manifest.txt"), &manifest, Some(&args.out))?;
    write_track(&args.out.join("gt_track.txt"), &clip.gt_track)?;

    let clean = args.dropout == 0.0 && args.jitter == 0.0 && args.outliers == 0;
    let detections = if clean {
        // Full coverage: any key-frame schedule cross-loads.
        let mut set = DetectionSet::new();
        for entry in clip.gt_track.entries() {
            set.push(entry.frame_index, entry.bbox);
        }
        set
    } else {
        let keys = schedule_keyframes(args.frames, cfg.zoom.keyframe_fraction)?;
        perturb_detections(
            &clip.gt_track,
            &keys.key_indices,
            args.dropout,
            args.jitter,
            args.outliers,
            args.outlier_offset,
            cfg.seed.wrapping_add(1),
        )?
    };
    write_detections(&args.out.join("detections.txt"), &detections.to_records())?;

    let occupancy =
        (actor.0 as f64 * actor.1 as f64) / (args.width as f64 * args.height as f64);
    println!(
        "wrote {} frames {}x{} to {}",
        args.frames,
        args.width,
        args.height,
        args.out.display()
    );
    println!(
        "actor {}x{} occupancy {:.4}  detections {}",
        actor.0,
        actor.1,
        occupancy,
        detections.len()
    );
    Ok(())
}
