//! Auto-zoom target tracking and temporal reasoning.
//!
//! The pipeline detects a target on scheduled key frames, predicts motion
//! between them, validates detections against the prediction, interpolates
//! a full per-frame track, and crops/scales each frame so the target
//! occupies a fixed share of the output. The reasoning layer classifies
//! the zoomed clip with latent cross attention (or conv baselines) under
//! exact FLOP accounting.

pub mod bbox;
pub mod error;
pub mod frame;
pub mod io;
pub mod locator;
pub mod reason;
pub mod rng;
pub mod schedule;
pub mod synth;
pub mod tensor;
pub mod track;
pub mod zoom;

pub use bbox::{center_distance, BBox};
pub use error::{Error, Result};
pub use frame::FrameBuffer;
pub use track::{Provenance, Track, TrackEntry};
