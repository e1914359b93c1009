//! Synthetic clips with exactly known tracks: the ground-truth oracle for
//! the zoom pipeline and the source of the toy classification task.
//!
//! Actors are solid value-1.0 rectangles on a mid-gray background, so
//! occupancy is measurable by pixel counting. All randomness flows through
//! the seeded generator; the same seed always yields the same bytes.

use crate::bbox::{center_distance, BBox};
use crate::error::{Error, Result};
use crate::frame::FrameBuffer;
use crate::locator::DetectionSet;
use crate::reason::ReasonConfig;
use crate::rng::Lcg;
use crate::track::{Provenance, Track, TrackEntry};
use crate::zoom::{DistanceThreshold, ZoomParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectoryKind {
    /// Constant velocity in px/frame.
    Linear { velocity: (f64, f64) },
    /// Constant radius and turn angle; the start point sits on the circle.
    Circular { radius: f64, angular_step: f64 },
    /// Unit horizontal speed with a vertical sine of the given amplitude
    /// and period (frames). Amplitude 0 degenerates to Linear (1, 0).
    Sinusoidal { amplitude: f64, period: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    pub start: (f64, f64),
    pub n_frames: usize,
    /// Frame bounds (width, height); every center must stay inside.
    pub bounds: (f64, f64),
}

/// Per-frame centers. Errors if any center leaves the frame bounds.
pub fn gen_trajectory(spec: &TrajectorySpec) -> Result<Vec<(f64, f64)>> {
    if spec.n_frames == 0 {
        return Err(Error::invalid("trajectory needs at least one frame"));
    }
    let (bw, bh) = spec.bounds;
    if bw <= 0.0 || bh <= 0.0 {
        return Err(Error::invalid("trajectory bounds must be positive"));
    }
    let mut centers = Vec::with_capacity(spec.n_frames);
    for i in 0..spec.n_frames {
        let fi = i as f64;
        let (x, y) = match spec.kind {
            TrajectoryKind::Linear { velocity: (vx, vy) } => {
                (spec.start.0 + fi * vx, spec.start.1 + fi * vy)
            }
            TrajectoryKind::Circular {
                radius,
                angular_step,
            } => {
                if radius <= 0.0 {
                    return Err(Error::invalid("circular radius must be positive"));
                }
                // Circle center sits radius to the left of the start point.
                let cx = spec.start.0 - radius;
                let angle = fi * angular_step;
                (cx + radius * angle.cos(), spec.start.1 + radius * angle.sin())
            }
            TrajectoryKind::Sinusoidal { amplitude, period } => {
                if period <= 0.0 {
                    return Err(Error::invalid("sinusoidal period must be positive"));
                }
                (
                    spec.start.0 + fi,
                    spec.start.1 + amplitude * (2.0 * std::f64::consts::PI * fi / period).sin(),
                )
            }
        };
        if !(0.0..bw).contains(&x) || !(0.0..bh).contains(&y) {
            return Err(Error::invalid(format!(
                "trajectory exits frame bounds at frame {i}: ({x}, {y}) not in {bw}x{bh}"
            )));
        }
        centers.push((x, y));
    }
    Ok(centers)
}

#[derive(Debug, Clone)]
pub struct SyntheticClip {
    pub frames: Vec<FrameBuffer>,
    pub gt_track: Track,
    /// Motion-class index; clips outside the toy dataset use 0.
    pub label: usize,
}

/// Render a clip: value-1.0 actor rectangle at each (rounded) center on a
/// 0.5 background plus one static uniform noise field in (-noise, +noise).
/// The ground-truth track keeps the exact unrounded centers.
pub fn render_clip(
    traj: &[(f64, f64)],
    actor: (u32, u32),
    frame: (u32, u32),
    noise: f64,
    seed: u64,
) -> Result<SyntheticClip> {
    if traj.is_empty() {
        return Err(Error::invalid("empty trajectory"));
    }
    let (aw, ah) = actor;
    let (fw, fh) = frame;
    if aw == 0 || ah == 0 || fw == 0 || fh == 0 {
        return Err(Error::invalid("actor and frame sizes must be positive"));
    }
    if !(0.0..0.5).contains(&noise) {
        return Err(Error::invalid("noise amplitude must lie in [0, 0.5)"));
    }
    let mut rng = Lcg::new(seed);
    let background: Vec<f64> = (0..(fw as usize) * (fh as usize))
        .map(|_| 0.5 + rng.uniform(-noise, noise))
        .collect();

    let mut frames = Vec::with_capacity(traj.len());
    let mut entries = Vec::with_capacity(traj.len());
    for (i, &(cx, cy)) in traj.iter().enumerate() {
        let left = cx.round() as i64 - (aw as i64) / 2;
        let top = cy.round() as i64 - (ah as i64) / 2;
        if left < 0 || top < 0 || left + aw as i64 > fw as i64 || top + ah as i64 > fh as i64 {
            return Err(Error::invalid(format!(
                "actor out of bounds at frame {i}: ({left}, {top}) size {aw}x{ah} in {fw}x{fh}"
            )));
        }
        let mut buf = FrameBuffer::new(fw, fh, 1, background.clone())?;
        for y in top..top + ah as i64 {
            for x in left..left + aw as i64 {
                buf.set(x as u32, y as u32, 0, 1.0);
            }
        }
        frames.push(buf);
        entries.push(TrackEntry {
            frame_index: i,
            bbox: BBox::new(cx, cy, aw as f64, ah as f64, 1.0)?,
            provenance: Provenance::Detected,
        });
    }
    Ok(SyntheticClip {
        frames,
        gt_track: Track::new(entries, traj.len(), frame)?,
        label: 0,
    })
}

/// Degrade ground truth into detector output on the given key frames:
/// drop an exact `round(dropout * len)` count of keys, jitter survivors
/// uniformly within +/- `jitter` px, and replace `outliers` survivors with
/// boxes exactly `outlier_offset` px away at score 0.9.
///
/// Outliers are only placed after the third surviving key so the track
/// bootstrap (which accepts detections as-is) is never poisoned.
pub fn perturb_detections(
    gt: &Track,
    key_indices: &[usize],
    dropout: f64,
    jitter: f64,
    outliers: usize,
    outlier_offset: f64,
    seed: u64,
) -> Result<DetectionSet> {
    if !(0.0..=1.0).contains(&dropout) {
        return Err(Error::invalid("dropout must lie in [0, 1]"));
    }
    if jitter < 0.0 {
        return Err(Error::invalid("jitter must be >= 0"));
    }
    if outliers > 0 && outlier_offset <= 0.0 {
        return Err(Error::invalid("outlier_offset must be positive"));
    }
    let mut rng = Lcg::new(seed);

    let n_drop = (dropout * key_indices.len() as f64).round() as usize;
    let dropped: std::collections::BTreeSet<usize> =
        rng.choose(key_indices.len(), n_drop).into_iter().collect();
    let survivors: Vec<usize> = key_indices
        .iter()
        .enumerate()
        .filter(|(slot, _)| !dropped.contains(slot))
        .map(|(_, &frame)| frame)
        .collect();

    // Outlier slots: survivors strictly after the third one.
    let eligible = survivors.len().saturating_sub(3);
    if outliers > eligible {
        return Err(Error::invalid(format!(
            "{outliers} outliers requested but only {eligible} post-bootstrap key slots survive"
        )));
    }
    let outlier_slots: std::collections::BTreeSet<usize> = rng
        .choose(eligible, outliers)
        .into_iter()
        .map(|i| i + 3)
        .collect();

    let mut set = DetectionSet::new();
    for (slot, &frame) in survivors.iter().enumerate() {
        let gt_box = gt.entry(frame)?.bbox;
        if outlier_slots.contains(&slot) {
            let angle = rng.uniform(0.0, 2.0 * std::f64::consts::PI);
            let bbox = BBox::new(
                gt_box.cx + outlier_offset * angle.cos(),
                gt_box.cy + outlier_offset * angle.sin(),
                gt_box.w,
                gt_box.h,
                0.9,
            )?;
            set.push(frame, bbox);
        } else {
            let dx = rng.uniform(-jitter, jitter);
            let dy = rng.uniform(-jitter, jitter);
            set.push(frame, gt_box.at(gt_box.cx + dx, gt_box.cy + dy));
        }
    }
    Ok(set)
}

/// Mean and max per-frame center distance between two tracks.
pub fn track_error(pred: &Track, gt: &Track) -> Result<(f64, f64)> {
    if pred.frame_count() != gt.frame_count() {
        return Err(Error::invalid(format!(
            "track length mismatch: {} vs {}",
            pred.frame_count(),
            gt.frame_count()
        )));
    }
    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    for (p, g) in pred.entries().iter().zip(gt.entries()) {
        let d = center_distance(&p.bbox, &g.bbox);
        sum += d;
        max = max.max(d);
    }
    Ok((sum / pred.frame_count() as f64, max))
}

pub const TOY_CLASSES: [&str; 4] = ["left", "right", "up", "down"];
pub const TOY_FRAME: (u32, u32) = (96, 96);
pub const TOY_ACTOR: (u32, u32) = (20, 20);
pub const TOY_FRAMES_PER_CLIP: usize = 11;
pub const TOY_NOISE: f64 = 0.1;

/// Zoom settings sized for the toy clips: the 20x20 actor lands in the
/// (0.08, 0.12) occupancy band at crop 64, scaled to 16x16 model input.
pub fn toy_zoom_params() -> ZoomParams {
    ZoomParams {
        keyframe_fraction: 0.2,
        score_threshold: 0.8,
        distance_threshold: DistanceThreshold::Adaptive,
        crop_candidates: vec![32, 48, 64],
        occupancy_low: 0.08,
        occupancy_high: 0.12,
        input_size: 16,
    }
}

/// Attention-variant dimensions for the toy task (input 16x16 = 256 px).
pub fn toy_reason_config() -> ReasonConfig {
    ReasonConfig::attention(TOY_FRAMES_PER_CLIP, 24, 4, 16, 16, 1, 4, 256)
}

/// Balanced four-class dataset of moving-rectangle clips, split 80/20 per
/// class into (train, test). Labels: 0 left, 1 right, 2 up, 3 down.
pub fn make_toy_dataset(
    n_clips: usize,
    seed: u64,
) -> Result<(Vec<SyntheticClip>, Vec<SyntheticClip>)> {
    if n_clips < TOY_CLASSES.len() {
        return Err(Error::invalid(format!(
            "need at least {} clips for {} classes",
            TOY_CLASSES.len(),
            TOY_CLASSES.len()
        )));
    }
    let (fw, fh) = TOY_FRAME;
    let steps = (TOY_FRAMES_PER_CLIP - 1) as f64;
    // The actor travels from one margin to the other: span 68 px over the
    // clip, with 10 px actor clearance kept on every side.
    let mut per_class: Vec<Vec<SyntheticClip>> = vec![Vec::new(); TOY_CLASSES.len()];
    for i in 0..n_clips {
        let label = i % TOY_CLASSES.len();
        let mut rng = Lcg::derive(seed, i as u64);
        let along = rng.uniform(80.0, 84.0); // start coordinate on the motion axis
        let cross = rng.uniform(38.0, 58.0); // fixed coordinate across it
        let span = rng.uniform(64.0, 68.0);
        let speed = span / steps;
        let (start, velocity) = match label {
            0 => ((along, cross), (-speed, 0.0)),                  // left
            1 => ((fw as f64 - along, cross), (speed, 0.0)),       // right
            2 => ((cross, along), (0.0, -speed)),                  // up
            _ => ((cross, fh as f64 - along), (0.0, speed)),       // down
        };
        let spec = TrajectorySpec {
            kind: TrajectoryKind::Linear { velocity },
            start,
            n_frames: TOY_FRAMES_PER_CLIP,
            bounds: (fw as f64, fh as f64),
        };
        let traj = gen_trajectory(&spec)?;
        let mut clip = render_clip(&traj, TOY_ACTOR, TOY_FRAME, TOY_NOISE, rng.next_u64())?;
        clip.label = label;
        per_class[label].push(clip);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for clips in per_class {
        let n_test = (clips.len() as f64 * 0.2).round() as usize;
        let n_train = clips.len() - n_test;
        for (j, clip) in clips.into_iter().enumerate() {
            if j < n_train {
                train.push(clip);
            } else {
                test.push(clip);
            }
        }
    }
    Ok((train, test))
}
