//! Run configuration: built-in defaults, then a flat `key = value` config
//! file, then command-line flags, each layer overriding the previous one.

use std::fs;
use std::path::PathBuf;

use autozoom::error::{Error, Result};
use autozoom::locator::DetectorSpec;
use autozoom::reason::Variant;
use autozoom::zoom::{DistanceThreshold, ZoomParams};
use clap::Args;

/// Options shared by every subcommand. Each flag overrides the matching
/// config-file key of the same name.
#[derive(Args, Debug, Default, Clone)]
pub struct CommonOpts {
    /// Flat `key = value` config file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Fraction of frames handed to the detector, in (0, 1].
    #[arg(long, value_name = "F")]
    pub keyframe_fraction: Option<f64>,
    /// Detections must score strictly above this.
    #[arg(long, value_name = "F")]
    pub score_threshold: Option<f64>,
    /// Prediction gate: `adaptive` or a fixed pixel distance.
    #[arg(long, value_name = "adaptive|PX")]
    pub distance_threshold: Option<String>,
    /// Comma-separated candidate crop sizes, strictly ascending.
    #[arg(long, value_name = "N,N,...")]
    pub crop_sizes: Option<String>,
    /// Lower edge of the target occupancy band.
    #[arg(long, value_name = "F")]
    pub occupancy_low: Option<f64>,
    /// Upper edge of the target occupancy band.
    #[arg(long, value_name = "F")]
    pub occupancy_high: Option<f64>,
    /// Side length zoomed frames are scaled to.
    #[arg(long, value_name = "PX")]
    pub input_size: Option<u32>,
    /// Detection source: `file:<path>` or `exec:<command>`.
    #[arg(long, value_name = "SPEC")]
    pub detector: Option<String>,
    /// Seed for everything random.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Model variant: attention, conv2plus1, or conv3d.
    #[arg(long, value_name = "NAME")]
    pub variant: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub zoom: ZoomParams,
    pub seed: u64,
    pub variant: Variant,
    pub detector: Option<DetectorSpec>,
}

pub fn parse_distance(s: &str) -> Result<DistanceThreshold> {
    if s == "adaptive" {
        return Ok(DistanceThreshold::Adaptive);
    }
    let v: f64 = s.parse().map_err(|_| {
        Error::invalid(format!(
            "distance threshold {s:?} must be `adaptive` or a number"
        ))
    })?;
    Ok(DistanceThreshold::Fixed(v))
}

pub fn parse_crop_sizes(s: &str) -> Result<Vec<u32>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<u32>()
                .map_err(|_| Error::invalid(format!("bad crop size {tok:?}")))
        })
        .collect()
}

fn parse_err(path: &PathBuf, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.clone(),
        line,
        msg: msg.into(),
    }
}

fn apply_file(cfg: &mut RunConfig, path: &PathBuf) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.clone(), e))?;
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(path, lineno, "expected `key = value`"))?;
        let key = key.trim();
        let value = value.trim();
        let bad = |what: &str| parse_err(path, lineno, format!("bad {what} value {value:?}"));
        match key {
            "keyframe_fraction" => {
                cfg.zoom.keyframe_fraction = value.parse().map_err(|_| bad(key))?
            }
            "score_threshold" => cfg.zoom.score_threshold = value.parse().map_err(|_| bad(key))?,
            "distance_threshold" => {
                cfg.zoom.distance_threshold =
                    parse_distance(value).map_err(|_| bad(key))?
            }
            "crop_sizes" => {
                cfg.zoom.crop_candidates = parse_crop_sizes(value).map_err(|_| bad(key))?
            }
            "occupancy_low" => cfg.zoom.occupancy_low = value.parse().map_err(|_| bad(key))?,
            "occupancy_high" => cfg.zoom.occupancy_high = value.parse().map_err(|_| bad(key))?,
            "input_size" => cfg.zoom.input_size = value.parse().map_err(|_| bad(key))?,
            "detector" => cfg.detector = Some(DetectorSpec::parse(value).map_err(|_| bad(key))?),
            "seed" => cfg.seed = value.parse().map_err(|_| bad(key))?,
            "variant" => cfg.variant = Variant::parse(value).map_err(|_| bad(key))?,
            other => {
                return Err(parse_err(path, lineno, format!("unknown config key {other:?}")))
            }
        }
    }
    Ok(())
}

/// Defaults, then the config file, then flags; the result is validated.
pub fn resolve(opts: &CommonOpts) -> Result<RunConfig> {
    let mut cfg = RunConfig {
        zoom: ZoomParams::default(),
        seed: 0,
        variant: Variant::Attention,
        detector: None,
    };
    if let Some(path) = &opts.config {
        apply_file(&mut cfg, path)?;
    }
    if let Some(v) = opts.keyframe_fraction {
        cfg.zoom.keyframe_fraction = v;
    }
    if let Some(v) = opts.score_threshold {
        cfg.zoom.score_threshold = v;
    }
    if let Some(s) = &opts.distance_threshold {
        cfg.zoom.distance_threshold = parse_distance(s)?;
    }
    if let Some(s) = &opts.crop_sizes {
        cfg.zoom.crop_candidates = parse_crop_sizes(s)?;
    }
    if let Some(v) = opts.occupancy_low {
        cfg.zoom.occupancy_low = v;
    }
    if let Some(v) = opts.occupancy_high {
        cfg.zoom.occupancy_high = v;
    }
    if let Some(v) = opts.input_size {
        cfg.zoom.input_size = v;
    }
    if let Some(s) = &opts.detector {
        cfg.detector = Some(DetectorSpec::parse(s)?);
    }
    if let Some(v) = opts.seed {
        cfg.seed = v;
    }
    if let Some(s) = &opts.variant {
        cfg.variant = Variant::parse(s)?;
    }
    cfg.zoom.validate()?;
    Ok(cfg)
}
