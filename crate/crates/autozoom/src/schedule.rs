//! Key-frame selection.
//!
//! The detector runs only on key frames; everything else is interpolated.
//! Key frames are taken at a fixed stride derived from the requested
//! fraction, and the final frame is always a key frame so interpolation has
//! a right-hand anchor.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyFrameSchedule {
    /// Sorted, unique frame indices. Always contains 0 and frame_count - 1.
    pub key_indices: Vec<usize>,
    pub frame_count: usize,
    pub stride: usize,
}

impl KeyFrameSchedule {
    pub fn is_key(&self, frame_index: usize) -> bool {
        self.key_indices.binary_search(&frame_index).is_ok()
    }
}

/// Select key frames at stride `round(1 / fraction)`, starting at frame 0,
/// forcing the last frame. `fraction` must lie in `(0, 1]`.
pub fn schedule_keyframes(frame_count: usize, fraction: f64) -> Result<KeyFrameSchedule> {
    if frame_count == 0 {
        return Err(Error::invalid("schedule requires at least one frame"));
    }
    if !fraction.is_finite() || fraction <= 0.0 || fraction > 1.0 {
        return Err(Error::invalid(format!(
            "key-frame fraction {fraction} outside (0, 1]"
        )));
    }
    let stride = (1.0 / fraction).round().max(1.0) as usize;
    let mut key_indices: Vec<usize> = (0..frame_count).step_by(stride).collect();
    let last = frame_count - 1;
    if *key_indices.last().unwrap() != last {
        key_indices.push(last);
    }
    Ok(KeyFrameSchedule {
        key_indices,
        frame_count,
        stride,
    })
}
