//! `autozoom track`: run the detector on key frames, extrapolate and
//! interpolate the rest, and write the full track.

use std::path::PathBuf;

use autozoom::error::{Error, Result};
use autozoom::io::write_track;
use autozoom::locator::{CountingDetector, DetectorHandle};
use autozoom::schedule::schedule_keyframes;
use autozoom::zoom::build_track_with;
use clap::Args;

use crate::clip::load_manifest_checked;
use crate::config::{self, CommonOpts};

#[derive(Args, Debug)]
pub struct TrackArgs {
    /// Clip manifest to track.
    #[arg(long, value_name = "PATH")]
    pub manifest: PathBuf,
    /// Output track file.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: CommonOpts,
}

pub fn run(args: &TrackArgs) -> Result<()> {
    let cfg = config::resolve(&args.common)?;
    let spec = cfg
        .detector
        .as_ref()
        .ok_or_else(|| Error::invalid("track needs --detector file:<path> or exec:<command>"))?;
    let manifest = load_manifest_checked(&args.manifest)?;
    let keys = schedule_keyframes(manifest.frame_count(), cfg.zoom.keyframe_fraction)?;

    let mut detector = CountingDetector::new(DetectorHandle::from_spec(spec)?);
    let track = build_track_with(
        &mut detector,
        manifest.frame_count(),
        (manifest.width, manifest.height),
        Some(&manifest.frame_paths),
        &cfg.zoom,
    )?;
    write_track(&args.out, &track)?;

    let (detected, predicted, interpolated) = track.provenance_histogram();
    println!(
        "frames {}  key frames {}",
        manifest.frame_count(),
        keys.key_indices.len()
    );
    println!("detector invocations {}", detector.queries());
    println!("provenance detected {detected} predicted {predicted} interpolated {interpolated}");
    Ok(())
}
