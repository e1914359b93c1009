//! `autozoom zoom`: crop each frame around its track entry and scale to
//! the model input size.

use std::fs;
use std::path::PathBuf;

use autozoom::error::{Error, Result};
use autozoom::io::{read_track, write_manifest, write_ppm, Manifest};
use autozoom::zoom::auto_zoom_clip;
use clap::Args;

use crate::clip::{load_manifest_checked, read_frames};
use crate::config::{self, CommonOpts};

#[derive(Args, Debug)]
pub struct ZoomArgs {
    /// Clip manifest to zoom.
    #[arg(long, value_name = "PATH")]
    pub manifest: PathBuf,
    /// Track file covering every frame of the clip.
    #[arg(long, value_name = "PATH")]
    pub track: PathBuf,
    /// Output directory for zoomed frames and their manifest.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: CommonOpts,
}

pub fn run(args: &ZoomArgs) -> Result<()> {
    let cfg = config::resolve(&args.common)?;
    let manifest = load_manifest_checked(&args.manifest)?;
    let track = read_track(
        &args.track,
        manifest.frame_count(),
        (manifest.width, manifest.height),
    )?;
    let frames = read_frames(&manifest)?;
    let zoomed = auto_zoom_clip(&frames, &track, &cfg.zoom)?;

    let frames_dir = args.out.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(frames_dir.clone(), e))?;
    let mut frame_paths = Vec::with_capacity(zoomed.frames.len());
    for (i, frame) in zoomed.frames.iter().enumerate() {
        let path = frames_dir.join(format!("frame_{i:06}.ppm"));
        write_ppm(&path, frame)?;
        frame_paths.push(path);
    }
    let out_manifest = Manifest {
        width: cfg.zoom.input_size,
        height: cfg.zoom.input_size,
        fps: manifest.fps,
        frame_paths,
    };
    write_manifest(&args.out.join("manifest.txt"), &out_manifest, Some(&args.out))?;

    // Post-zoom occupancy: bbox area over crop area, per frame.
    let mut min = f64::INFINITY;
    let mut max = 0.0f64;
    let mut sum = 0.0;
    for (entry, &size) in track.entries().iter().zip(&zoomed.crop_sizes) {
        let occ = entry.bbox.area() / (size as f64 * size as f64);
        min = min.min(occ);
        max = max.max(occ);
        sum += occ;
    }
    let n = zoomed.frames.len();
    println!(
        "wrote {n} frames at {0}x{0} in {1}",
        cfg.zoom.input_size,
        args.out.display()
    );
    println!(
        "occupancy min {min:.4} mean {:.4} max {max:.4}",
        sum / n as f64
    );
    Ok(())
}
