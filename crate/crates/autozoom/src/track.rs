//! Per-frame box sequences with provenance.

use crate::bbox::BBox;
use crate::error::{Error, Result};

/// How a track entry was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Detector output accepted by the validation gate.
    Detected,
    /// Motion-extrapolated fallback.
    Predicted,
    /// Linear interpolation between key frames.
    Interpolated,
}

impl Provenance {
    pub fn code(&self) -> char {
        match self {
            Provenance::Detected => 'D',
            Provenance::Predicted => 'P',
            Provenance::Interpolated => 'I',
        }
    }

    pub fn from_code(c: &str) -> Result<Self> {
        match c {
            "D" => Ok(Provenance::Detected),
            "P" => Ok(Provenance::Predicted),
            "I" => Ok(Provenance::Interpolated),
            other => Err(Error::invalid(format!("unknown provenance code {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackEntry {
    pub frame_index: usize,
    pub bbox: BBox,
    pub provenance: Provenance,
}

/// A finalized single-target track: exactly one entry per frame index in
/// `[0, frame_count)`, sorted, with every center inside the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    entries: Vec<TrackEntry>,
    frame_count: usize,
    frame_size: (u32, u32),
}

impl Track {
    pub fn new(
        mut entries: Vec<TrackEntry>,
        frame_count: usize,
        frame_size: (u32, u32),
    ) -> Result<Self> {
        if frame_count == 0 {
            return Err(Error::invalid("track frame_count must be >= 1"));
        }
        entries.sort_by_key(|e| e.frame_index);
        if entries.len() != frame_count {
            return Err(Error::invalid(format!(
                "track has {} entries for {} frames",
                entries.len(),
                frame_count
            )));
        }
        let (w, h) = frame_size;
        for (i, e) in entries.iter().enumerate() {
            if e.frame_index != i {
                return Err(Error::invalid(format!(
                    "track entries must cover every frame exactly once; missing frame {i}"
                )));
            }
            let b = &e.bbox;
            if b.cx < 0.0 || b.cx >= w as f64 || b.cy < 0.0 || b.cy >= h as f64 {
                return Err(Error::invalid(format!(
                    "frame {i}: bbox center ({}, {}) outside {w}x{h} frame",
                    b.cx, b.cy
                )));
            }
        }
        Ok(Track {
            entries,
            frame_count,
            frame_size,
        })
    }

    pub fn entries(&self) -> &[TrackEntry] {
        &self.entries
    }

    pub fn entry(&self, frame_index: usize) -> Result<&TrackEntry> {
        self.entries
            .get(frame_index)
            .ok_or(Error::Coverage(frame_index))
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn frame_size(&self) -> (u32, u32) {
        self.frame_size
    }

    /// Entry counts per provenance kind: (detected, predicted, interpolated).
    pub fn provenance_histogram(&self) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for e in &self.entries {
            match e.provenance {
                Provenance::Detected => counts.0 += 1,
                Provenance::Predicted => counts.1 += 1,
                Provenance::Interpolated => counts.2 += 1,
            }
        }
        counts
    }
}
