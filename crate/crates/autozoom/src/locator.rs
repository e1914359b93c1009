//! Detector backends and candidate-detection bookkeeping.
//!
//! The tracking stage only ever talks to a [`Detector`]; the two shipping
//! backends replay a detection file or query an external process over a
//! line-oriented JSON protocol. [`CountingDetector`] wraps either to make
//! the query budget observable in tests.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::io::{read_detection_records, DetectionRecord};

/// Candidate detections grouped by frame, insertion order preserved
/// within a frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionSet {
    by_frame: BTreeMap<usize, Vec<BBox>>,
}

impl DetectionSet {
    pub fn new() -> Self {
        DetectionSet::default()
    }

    pub fn push(&mut self, frame_index: usize, bbox: BBox) {
        self.by_frame.entry(frame_index).or_default().push(bbox);
    }

    pub fn frame(&self, frame_index: usize) -> &[BBox] {
        self.by_frame
            .get(&frame_index)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn frames(&self) -> impl Iterator<Item = (usize, &[BBox])> {
        self.by_frame.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.by_frame.values().map(|v| v.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_frame.is_empty()
    }

    pub fn to_records(&self) -> Vec<DetectionRecord> {
        self.frames()
            .flat_map(|(frame_index, boxes)| {
                boxes.iter().map(move |b| DetectionRecord {
                    frame_index,
                    bbox: *b,
                })
            })
            .collect()
    }
}

pub fn load_detections(path: &Path) -> Result<DetectionSet> {
    let mut set = DetectionSet::new();
    for r in read_detection_records(path)? {
        set.push(r.frame_index, r.bbox);
    }
    Ok(set)
}

/// Keep only detections whose score is strictly greater than `threshold`.
pub fn filter_by_score(dets: &[BBox], threshold: f64) -> Vec<BBox> {
    dets.iter().filter(|b| b.score > threshold).copied().collect()
}

/// Highest-score detection. Ties go to the larger box, then to whichever
/// came first in the list.
pub fn best_detection(dets: &[BBox]) -> Option<BBox> {
    let mut best: Option<&BBox> = None;
    for b in dets {
        best = match best {
            None => Some(b),
            Some(cur) => {
                if b.score > cur.score || (b.score == cur.score && b.area() > cur.area()) {
                    Some(b)
                } else {
                    Some(cur)
                }
            }
        };
    }
    best.copied()
}

/// Where detections come from: a recorded file or an external command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DetectorSpec {
    File(PathBuf),
    Exec(String),
}

impl DetectorSpec {
    /// Parse `file:<path>` or `exec:<command>`.
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(path) = s.strip_prefix("file:") {
            if path.is_empty() {
                return Err(Error::invalid("empty detector file path"));
            }
            Ok(DetectorSpec::File(PathBuf::from(path)))
        } else if let Some(cmd) = s.strip_prefix("exec:") {
            if cmd.is_empty() {
                return Err(Error::invalid("empty detector command"));
            }
            Ok(DetectorSpec::Exec(cmd.to_string()))
        } else {
            Err(Error::invalid(format!(
                "detector spec {s:?} must start with `file:` or `exec:`"
            )))
        }
    }
}

/// A per-frame object detector. `query` returns all candidates for one
/// frame; an empty vec means the detector saw nothing.
pub trait Detector {
    fn query(&mut self, frame_index: usize, image_path: Option<&Path>) -> Result<Vec<BBox>>;
}

/// Replays a recorded [`DetectionSet`].
pub struct FileDetector {
    set: DetectionSet,
}

impl FileDetector {
    pub fn new(set: DetectionSet) -> Self {
        FileDetector { set }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Ok(FileDetector::new(load_detections(path)?))
    }
}

impl Detector for FileDetector {
    fn query(&mut self, frame_index: usize, _image_path: Option<&Path>) -> Result<Vec<BBox>> {
        Ok(self.set.frame(frame_index).to_vec())
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    frame_index: usize,
    image_path: &'a str,
}

#[derive(Deserialize)]
struct WireBBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    score: f64,
}

#[derive(Deserialize)]
struct WireResponse {
    frame_index: usize,
    bboxes: Vec<WireBBox>,
}

/// Talks to a child process over stdin/stdout, one JSON object per line.
/// Request: `{"frame_index": N, "image_path": "..."}`. Response:
/// `{"frame_index": N, "bboxes": [{"cx": ..., "cy": ..., "w": ..., "h": ...,
/// "score": ...}]}`. Responses must come back in request order.
pub struct SubprocessDetector {
    child: Child,
    stdin: std::process::ChildStdin,
    stdout: BufReader<std::process::ChildStdout>,
    command: String,
}

impl SubprocessDetector {
    /// Launch `command` via `sh -c`.
    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::DetectorUnavailable(format!("failed to launch {command:?}: {e}")))?;
        let stdin = child.stdin.take().ok_or_else(|| {
            Error::DetectorUnavailable("detector child has no stdin".to_string())
        })?;
        let stdout = child.stdout.take().ok_or_else(|| {
            Error::DetectorUnavailable("detector child has no stdout".to_string())
        })?;
        Ok(SubprocessDetector {
            child,
            stdin,
            stdout: BufReader::new(stdout),
            command: command.to_string(),
        })
    }

    fn unavailable(&self, what: impl std::fmt::Display) -> Error {
        Error::DetectorUnavailable(format!("{} (command: {})", what, self.command))
    }
}

impl Detector for SubprocessDetector {
    fn query(&mut self, frame_index: usize, image_path: Option<&Path>) -> Result<Vec<BBox>> {
        let image_path = image_path
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        let req = WireRequest {
            frame_index,
            image_path: &image_path,
        };
        let mut line = serde_json::to_string(&req)
            .map_err(|e| self.unavailable(format!("request encode failed: {e}")))?;
        line.push('\n');
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| self.unavailable(format!("write failed: {e}")))?;

        let mut resp_line = String::new();
        let n = self
            .stdout
            .read_line(&mut resp_line)
            .map_err(|e| self.unavailable(format!("read failed: {e}")))?;
        if n == 0 {
            return Err(self.unavailable("detector closed its output"));
        }
        let resp: WireResponse = serde_json::from_str(resp_line.trim())
            .map_err(|e| self.unavailable(format!("bad response {resp_line:?}: {e}")))?;
        if resp.frame_index != frame_index {
            return Err(self.unavailable(format!(
                "response for frame {} while waiting on frame {}",
                resp.frame_index, frame_index
            )));
        }
        let mut out = Vec::with_capacity(resp.bboxes.len());
        for wb in resp.bboxes {
            out.push(
                BBox::new(wb.cx, wb.cy, wb.w, wb.h, wb.score)
                    .map_err(|e| self.unavailable(format!("bad bbox in response: {e}")))?,
            );
        }
        Ok(out)
    }
}

impl Drop for SubprocessDetector {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A detector backend plus the score gate its detections must clear.
/// `query` returns raw detections; filtering happens in the tracker.
pub struct DetectorHandle {
    backend: Box<dyn Detector>,
    pub score_threshold: f64,
}

impl DetectorHandle {
    pub fn new(backend: Box<dyn Detector>, score_threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score_threshold) || !score_threshold.is_finite() {
            return Err(Error::invalid(format!(
                "score threshold {score_threshold} outside [0, 1]"
            )));
        }
        Ok(DetectorHandle {
            backend,
            score_threshold,
        })
    }

    /// Open a backend from a spec with the default 0.8 score gate.
    pub fn from_spec(spec: &DetectorSpec) -> Result<Self> {
        let backend: Box<dyn Detector> = match spec {
            DetectorSpec::File(path) => Box::new(FileDetector::from_path(path)?),
            DetectorSpec::Exec(cmd) => Box::new(SubprocessDetector::spawn(cmd)?),
        };
        DetectorHandle::new(backend, 0.8)
    }
}

impl Detector for DetectorHandle {
    fn query(&mut self, frame_index: usize, image_path: Option<&Path>) -> Result<Vec<BBox>> {
        self.backend.query(frame_index, image_path)
    }
}

/// Raw (unfiltered) detections for one frame.
pub fn query_detector(
    handle: &mut DetectorHandle,
    frame_index: usize,
    frame_path: Option<&Path>,
) -> Result<Vec<BBox>> {
    handle.query(frame_index, frame_path)
}

/// Wraps a detector and counts queries.
pub struct CountingDetector<D: Detector> {
    inner: D,
    queries: usize,
}

impl<D: Detector> CountingDetector<D> {
    pub fn new(inner: D) -> Self {
        CountingDetector { inner, queries: 0 }
    }

    pub fn queries(&self) -> usize {
        self.queries
    }

    pub fn into_inner(self) -> D {
        self.inner
    }
}

impl<D: Detector> Detector for CountingDetector<D> {
    fn query(&mut self, frame_index: usize, image_path: Option<&Path>) -> Result<Vec<BBox>> {
        self.queries += 1;
        self.inner.query(frame_index, image_path)
    }
}
