//! Axis-aligned bounding boxes, center-parameterized.

use crate::error::{Error, Result};

/// A detection box: center position, size, and detector confidence.
///
/// Boxes are stored center-based with sub-pixel coordinates; rounding to
/// pixel grid happens only when a crop window is materialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    /// Detection score in [0, 1].
    pub score: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, score: f64) -> Result<Self> {
        if ![cx, cy, w, h, score].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("bbox fields must be finite"));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::invalid(format!(
                "bbox size must be positive, got w={w} h={h}"
            )));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::invalid(format!("bbox score {score} outside [0,1]")));
        }
        Ok(BBox { cx, cy, w, h, score })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn diagonal(&self) -> f64 {
        self.w.hypot(self.h)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.cx, self.cy)
    }

    /// Same box moved to a new center.
    pub fn at(&self, cx: f64, cy: f64) -> BBox {
        BBox { cx, cy, ..*self }
    }
}

/// Euclidean distance between two box centers.
pub fn center_distance(a: &BBox, b: &BBox) -> f64 {
    (a.cx - b.cx).hypot(a.cy - b.cy)
}
