//! Auto-zoom tracking: motion-extrapolated prediction, detection
//! validation, interpolation, and occupancy-driven cropping.
//!
//! The pipeline runs the detector only on key frames. Each key-frame
//! detection is gated by its distance to a motion-extrapolated prediction;
//! rejected or missing detections fall back to the prediction itself.
//! Non-key frames are linearly interpolated between accepted anchors.

use std::path::{Path, PathBuf};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::frame::FrameBuffer;
use crate::locator::{best_detection, filter_by_score, Detector, DetectionSet, FileDetector};
use crate::schedule::schedule_keyframes;
use crate::track::{Provenance, Track, TrackEntry};

/// Gate width for accepting a detection near the predicted center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistanceThreshold {
    /// Half the diagonal of the last accepted box, never below 20 px.
    Adaptive,
    Fixed(f64),
}

impl DistanceThreshold {
    pub fn value(&self, last_accepted: &BBox) -> f64 {
        match self {
            DistanceThreshold::Adaptive => (0.5 * last_accepted.diagonal()).max(20.0),
            DistanceThreshold::Fixed(v) => *v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoomParams {
    /// Fraction of frames run through the detector, in (0, 1].
    pub keyframe_fraction: f64,
    /// Detections must score strictly above this to count.
    pub score_threshold: f64,
    pub distance_threshold: DistanceThreshold,
    /// Candidate square crop sizes, tried in order.
    pub crop_candidates: Vec<u32>,
    /// Acceptable target area / crop area band, inclusive.
    pub occupancy_low: f64,
    pub occupancy_high: f64,
    /// Side length the crop is scaled to.
    pub input_size: u32,
}

impl Default for ZoomParams {
    fn default() -> Self {
        ZoomParams {
            keyframe_fraction: 0.10,
            score_threshold: 0.8,
            distance_threshold: DistanceThreshold::Adaptive,
            crop_candidates: vec![480, 640, 720, 960],
            occupancy_low: 0.15,
            occupancy_high: 0.20,
            input_size: 172,
        }
    }
}

impl ZoomParams {
    pub fn validate(&self) -> Result<()> {
        if !self.keyframe_fraction.is_finite()
            || self.keyframe_fraction <= 0.0
            || self.keyframe_fraction > 1.0
        {
            return Err(Error::invalid("keyframe_fraction must lie in (0, 1]"));
        }
        if !self.score_threshold.is_finite()
            || !(0.0..=1.0).contains(&self.score_threshold)
        {
            return Err(Error::invalid("score_threshold must lie in [0, 1]"));
        }
        if let DistanceThreshold::Fixed(v) = self.distance_threshold {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::invalid("fixed distance threshold must be > 0"));
            }
        }
        if self.crop_candidates.is_empty() {
            return Err(Error::invalid("crop_candidates must not be empty"));
        }
        if self.crop_candidates[0] == 0
            || self.crop_candidates.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::invalid(
                "crop candidates must be positive and strictly increasing",
            ));
        }
        if !self.occupancy_low.is_finite()
            || !self.occupancy_high.is_finite()
            || self.occupancy_low <= 0.0
            || self.occupancy_low >= self.occupancy_high
            || self.occupancy_high >= 1.0
        {
            return Err(Error::invalid(
                "occupancy band must satisfy 0 < low < high < 1",
            ));
        }
        if self.input_size == 0 {
            return Err(Error::invalid("input_size must be >= 1"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Motion extrapolation

/// Extrapolate the next center from three consecutive anchor centers,
/// oldest first. The step length continues the change in segment length
/// and the heading continues the change in segment angle:
///
/// ```text
/// next = p2 + (2*|p2-p1| - |p1-p0|) * (cos, sin)(2*theta12 - theta01)
/// ```
///
/// A zero-length latest segment reuses the previous heading; if both
/// segments are zero-length the heading is 0.
pub fn predict_next(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64)) -> (f64, f64) {
    let d_prev = (p1.0 - p0.0).hypot(p1.1 - p0.1);
    let d_last = (p2.0 - p1.0).hypot(p2.1 - p1.1);
    let theta_prev = if d_prev > 0.0 {
        (p1.1 - p0.1).atan2(p1.0 - p0.0)
    } else {
        0.0
    };
    let theta_last = if d_last > 0.0 {
        (p2.1 - p1.1).atan2(p2.0 - p1.0)
    } else {
        theta_prev
    };
    let step = 2.0 * d_last - d_prev;
    let heading = 2.0 * theta_last - theta_prev;
    (
        p2.0 + step * heading.cos(),
        p2.1 + step * heading.sin(),
    )
}

/// Rolling window of the three most recent accepted centers.
#[derive(Debug, Clone, Default)]
pub struct PredictionState {
    history: Vec<(f64, f64)>,
}

impl PredictionState {
    pub fn new() -> Self {
        PredictionState::default()
    }

    pub fn push(&mut self, center: (f64, f64)) {
        self.history.push(center);
        if self.history.len() > 3 {
            self.history.remove(0);
        }
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    /// `None` until three centers have been pushed.
    pub fn predict(&self) -> Option<(f64, f64)> {
        if self.history.len() < 3 {
            return None;
        }
        Some(predict_next(
            self.history[0],
            self.history[1],
            self.history[2],
        ))
    }
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Validation {
    /// Detection accepted as-is.
    Detected(BBox),
    /// Detection missing or too far from the prediction; the box sits at
    /// the predicted center with the carried-forward size and score 0.
    Predicted(BBox),
}

impl Validation {
    pub fn bbox(&self) -> BBox {
        match self {
            Validation::Detected(b) | Validation::Predicted(b) => *b,
        }
    }

    pub fn provenance(&self) -> Provenance {
        match self {
            Validation::Detected(_) => Provenance::Detected,
            Validation::Predicted(_) => Provenance::Predicted,
        }
    }
}

/// Accept `detected` if its center lies within `threshold` pixels of the
/// predicted center; otherwise fall back to a box at the predicted center
/// with `fallback_size`. Fallback boxes carry score 0 (no detector
/// confidence backs them).
pub fn validate(
    predicted: (f64, f64),
    detected: Option<BBox>,
    threshold: f64,
    fallback_size: (f64, f64),
) -> Validation {
    if let Some(c) = detected {
        let d = (c.cx - predicted.0).hypot(c.cy - predicted.1);
        if d <= threshold {
            return Validation::Detected(c);
        }
    }
    let fallback = BBox::new(predicted.0, predicted.1, fallback_size.0, fallback_size.1, 0.0)
        .expect("fallback size must come from a valid bbox");
    Validation::Predicted(fallback)
}

// ---------------------------------------------------------------------------
// Interpolation

/// Linear interpolation between two anchors. `frame_index` must lie
/// strictly between them. The score is the smaller endpoint score.
pub fn interpolate(a: &TrackEntry, b: &TrackEntry, frame_index: usize) -> Result<TrackEntry> {
    if a.frame_index >= b.frame_index {
        return Err(Error::invalid(format!(
            "interpolation anchors out of order: {} >= {}",
            a.frame_index, b.frame_index
        )));
    }
    if frame_index <= a.frame_index || frame_index >= b.frame_index {
        return Err(Error::invalid(format!(
            "frame {} outside open interval ({}, {})",
            frame_index, a.frame_index, b.frame_index
        )));
    }
    let t = (frame_index - a.frame_index) as f64 / (b.frame_index - a.frame_index) as f64;
    let lerp = |x: f64, y: f64| x + t * (y - x);
    let bbox = BBox::new(
        lerp(a.bbox.cx, b.bbox.cx),
        lerp(a.bbox.cy, b.bbox.cy),
        lerp(a.bbox.w, b.bbox.w),
        lerp(a.bbox.h, b.bbox.h),
        a.bbox.score.min(b.bbox.score),
    )?;
    Ok(TrackEntry {
        frame_index,
        bbox,
        provenance: Provenance::Interpolated,
    })
}

// ---------------------------------------------------------------------------
// Track construction

fn clamp_center(c: (f64, f64), frame_size: (u32, u32)) -> (f64, f64) {
    (
        c.0.clamp(0.0, (frame_size.0 - 1) as f64),
        c.1.clamp(0.0, (frame_size.1 - 1) as f64),
    )
}

/// Build a full-coverage track by querying `detector` once per key frame.
///
/// The first three key-frame detections passing the score filter are taken
/// as-is; every later key frame is gated against the motion prediction.
/// Key frames skipped during bootstrap, all non-key frames, and any frames
/// before the first anchor are filled by interpolation (leading frames
/// copy the first anchor's box).
pub fn build_track_with<D: Detector>(
    detector: &mut D,
    frame_count: usize,
    frame_size: (u32, u32),
    frame_paths: Option<&[PathBuf]>,
    params: &ZoomParams,
) -> Result<Track> {
    params.validate()?;
    if let Some(paths) = frame_paths {
        if paths.len() != frame_count {
            return Err(Error::invalid(format!(
                "{} frame paths for {} frames",
                paths.len(),
                frame_count
            )));
        }
    }
    let schedule = schedule_keyframes(frame_count, params.keyframe_fraction)?;

    let mut anchors: Vec<TrackEntry> = Vec::new();
    let mut state = PredictionState::new();

    for &k in &schedule.key_indices {
        let image_path: Option<&Path> = frame_paths.map(|p| p[k].as_path());
        let raw = detector.query(k, image_path)?;
        let candidates = filter_by_score(&raw, params.score_threshold);
        let best = best_detection(&candidates);

        if anchors.len() < 3 {
            // Bootstrap: no prediction exists yet, accept the best
            // score-valid detection unconditionally.
            if let Some(b) = best {
                state.push(b.center());
                anchors.push(TrackEntry {
                    frame_index: k,
                    bbox: b,
                    provenance: Provenance::Detected,
                });
            }
            continue;
        }

        let predicted = clamp_center(state.predict().unwrap(), frame_size);
        let last = &anchors.last().unwrap().bbox;
        let gate = params.distance_threshold.value(last);
        let v = validate(predicted, best, gate, (last.w, last.h));
        let bbox = v.bbox();
        state.push(bbox.center());
        anchors.push(TrackEntry {
            frame_index: k,
            bbox,
            provenance: v.provenance(),
        });
    }

    if anchors.len() < 3 {
        return Err(Error::Bootstrap {
            found: anchors.len(),
        });
    }

    // Expand anchors into one entry per frame.
    let mut entries: Vec<TrackEntry> = Vec::with_capacity(frame_count);
    let first = &anchors[0];
    for f in 0..first.frame_index {
        entries.push(TrackEntry {
            frame_index: f,
            bbox: first.bbox,
            provenance: Provenance::Interpolated,
        });
    }
    for w in anchors.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        entries.push(*a);
        for f in a.frame_index + 1..b.frame_index {
            entries.push(interpolate(a, b, f)?);
        }
    }
    let last = anchors.last().unwrap();
    entries.push(*last);
    debug_assert_eq!(last.frame_index, frame_count - 1);

    Track::new(entries, frame_count, frame_size)
}

/// [`build_track_with`] over a recorded detection set.
pub fn build_track(
    detections: &DetectionSet,
    frame_count: usize,
    frame_size: (u32, u32),
    params: &ZoomParams,
) -> Result<Track> {
    let mut det = FileDetector::new(detections.clone());
    build_track_with(&mut det, frame_count, frame_size, None, params)
}

// ---------------------------------------------------------------------------
// Crop sizing and extraction

/// Smallest candidate whose occupancy `target_area / size^2` lands inside
/// `[low, high]`. If none does, the candidate whose occupancy is closest
/// to the band wins; ties keep the earlier candidate.
pub fn select_crop_size(
    target_area: f64,
    candidates: &[u32],
    low: f64,
    high: f64,
) -> Result<u32> {
    if candidates.is_empty() {
        return Err(Error::invalid("no crop candidates"));
    }
    if !(target_area.is_finite() && target_area > 0.0) {
        return Err(Error::invalid(format!("target area {target_area} must be > 0")));
    }
    let mut best: Option<(u32, f64)> = None;
    for &c in candidates {
        let occ = target_area / (c as f64 * c as f64);
        if (low..=high).contains(&occ) {
            return Ok(c);
        }
        let dist = if occ < low { low - occ } else { occ - high };
        match best {
            Some((_, d)) if d <= dist => {}
            _ => best = Some((c, dist)),
        }
    }
    Ok(best.unwrap().0)
}

/// An axis-aligned pixel window inside a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

/// Square window of side `size` centered at `center` (rounded), shifted
/// rather than shrunk when it would cross the frame edge. A side larger
/// than the frame is clamped to the frame on that axis.
pub fn crop_region(center: (f64, f64), size: u32, frame_w: u32, frame_h: u32) -> CropWindow {
    let w = size.min(frame_w);
    let h = size.min(frame_h);
    let x0 = center.0.round() as i64 - (size as i64) / 2;
    let y0 = center.1.round() as i64 - (size as i64) / 2;
    let x = x0.clamp(0, (frame_w - w) as i64) as u32;
    let y = y0.clamp(0, (frame_h - h) as i64) as u32;
    CropWindow { x, y, w, h }
}

pub fn crop_frame(src: &FrameBuffer, window: &CropWindow) -> Result<FrameBuffer> {
    if window.x + window.w > src.width || window.y + window.h > src.height {
        return Err(Error::invalid(format!(
            "crop window {}x{}+{}+{} exceeds {}x{} frame",
            window.w, window.h, window.x, window.y, src.width, src.height
        )));
    }
    let mut data =
        Vec::with_capacity(window.w as usize * window.h as usize * src.channels as usize);
    for y in window.y..window.y + window.h {
        for x in window.x..window.x + window.w {
            for c in 0..src.channels {
                data.push(src.get(x, y, c));
            }
        }
    }
    FrameBuffer::new(window.w, window.h, src.channels, data)
}

/// Bilinear resize with half-pixel sample alignment: output pixel `i`
/// samples source coordinate `(i + 0.5) * in/out - 0.5`, clamped.
pub fn resize_bilinear(src: &FrameBuffer, out_w: u32, out_h: u32) -> Result<FrameBuffer> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::invalid("resize target must be >= 1x1"));
    }
    let sx_scale = src.width as f64 / out_w as f64;
    let sy_scale = src.height as f64 / out_h as f64;
    let mut data = Vec::with_capacity(out_w as usize * out_h as usize * src.channels as usize);
    for oy in 0..out_h {
        let sy = ((oy as f64 + 0.5) * sy_scale - 0.5).clamp(0.0, (src.height - 1) as f64);
        let y0 = sy.floor() as u32;
        let y1 = (y0 + 1).min(src.height - 1);
        let fy = sy - y0 as f64;
        for ox in 0..out_w {
            let sx = ((ox as f64 + 0.5) * sx_scale - 0.5).clamp(0.0, (src.width - 1) as f64);
            let x0 = sx.floor() as u32;
            let x1 = (x0 + 1).min(src.width - 1);
            let fx = sx - x0 as f64;
            for c in 0..src.channels {
                let top = src.get(x0, y0, c) * (1.0 - fx) + src.get(x1, y0, c) * fx;
                let bot = src.get(x0, y1, c) * (1.0 - fx) + src.get(x1, y1, c) * fx;
                data.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    FrameBuffer::new(out_w, out_h, src.channels, data)
}

// ---------------------------------------------------------------------------
// Whole-clip zoom

#[derive(Debug, Clone, PartialEq)]
pub struct ZoomedClip {
    /// One `input_size` x `input_size` frame per source frame.
    pub frames: Vec<FrameBuffer>,
    pub windows: Vec<CropWindow>,
    pub crop_sizes: Vec<u32>,
}

/// Per-frame crop decision without touching pixels: crop side length and
/// window for one track entry.
pub fn zoom_window(
    entry: &TrackEntry,
    frame_size: (u32, u32),
    params: &ZoomParams,
) -> Result<(u32, CropWindow)> {
    let size = select_crop_size(
        entry.bbox.area(),
        &params.crop_candidates,
        params.occupancy_low,
        params.occupancy_high,
    )?;
    let window = crop_region(entry.bbox.center(), size, frame_size.0, frame_size.1);
    Ok((size, window))
}

/// Crop every frame around its track entry and scale to
/// `params.input_size`.
pub fn auto_zoom_clip(
    frames: &[FrameBuffer],
    track: &Track,
    params: &ZoomParams,
) -> Result<ZoomedClip> {
    params.validate()?;
    if frames.len() != track.frame_count() {
        return Err(Error::invalid(format!(
            "{} frames but track covers {}",
            frames.len(),
            track.frame_count()
        )));
    }
    let frame_size = track.frame_size();
    let mut out = ZoomedClip {
        frames: Vec::with_capacity(frames.len()),
        windows: Vec::with_capacity(frames.len()),
        crop_sizes: Vec::with_capacity(frames.len()),
    };
    for (frame, entry) in frames.iter().zip(track.entries()) {
        if frame.width != frame_size.0 || frame.height != frame_size.1 {
            return Err(Error::invalid(format!(
                "frame {} is {}x{}, track expects {}x{}",
                entry.frame_index, frame.width, frame.height, frame_size.0, frame_size.1
            )));
        }
        let (size, window) = zoom_window(entry, frame_size, params)?;
        let cropped = crop_frame(frame, &window)?;
        let scaled = resize_bilinear(&cropped, params.input_size, params.input_size)?;
        out.frames.push(scaled);
        out.windows.push(window);
        out.crop_sizes.push(size);
    }
    Ok(out)
}
