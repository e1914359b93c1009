//! In-memory image planes.

use crate::error::{Error, Result};

/// Row-major interleaved image, values in `[0, 1]`.
/// Index layout: `data[(y * width + x) * channels + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBuffer {
    pub width: u32,
    pub height: u32,
    pub channels: u32,
    pub data: Vec<f64>,
}

impl FrameBuffer {
    pub fn new(width: u32, height: u32, channels: u32, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("frame dimensions must be >= 1"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "unsupported channel count {channels}; expected 1 or 3"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(Error::invalid(format!(
                "frame data length {} does not match {}x{}x{} = {}",
                data.len(),
                width,
                height,
                channels,
                expected
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::invalid(format!(
                "frame value {v} outside [0, 1]"
            )));
        }
        Ok(FrameBuffer {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, channels: u32, value: f64) -> Result<Self> {
        let len = width as usize * height as usize * channels as usize;
        FrameBuffer::new(width, height, channels, vec![value; len])
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, c: u32) -> f64 {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        self.data[(y as usize * self.width as usize + x as usize) * self.channels as usize
            + c as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, c: u32, v: f64) {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        self.data[(y as usize * self.width as usize + x as usize) * self.channels as usize
            + c as usize] = v;
    }
}
