//! File formats: PPM images, clip manifests, track/detection text files.
//!
//! All writes go through a temp file in the destination directory followed
//! by a rename, so a crash never leaves a half-written output behind.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::frame::FrameBuffer;
use crate::track::{Provenance, Track, TrackEntry};

/// Write `bytes` to `path` atomically: temp file in the same directory,
/// flushed, then renamed over the destination.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = PathBuf::from(dir);
    let base = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("cannot write to {}", path.display())))?;
    tmp.push(format!(".{}.tmp", base.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

// ---------------------------------------------------------------------------
// PPM (P6, 8-bit)

/// Encode a frame as binary PPM. Single-channel frames are written as gray
/// RGB triples. Values are scaled by 255 and rounded.
pub fn encode_ppm(frame: &FrameBuffer) -> Vec<u8> {
    let mut out = Vec::with_capacity(
        32 + frame.width as usize * frame.height as usize * 3,
    );
    out.extend_from_slice(format!("P6\n{} {}\n255\n", frame.width, frame.height).as_bytes());
    for y in 0..frame.height {
        for x in 0..frame.width {
            for c in 0..3 {
                let ch = if frame.channels == 3 { c } else { 0 };
                let v = (frame.get(x, y, ch) * 255.0).round().clamp(0.0, 255.0) as u8;
                out.push(v);
            }
        }
    }
    out
}

pub fn write_ppm(path: &Path, frame: &FrameBuffer) -> Result<()> {
    write_atomic(path, &encode_ppm(frame))
}

/// Decode a binary PPM into a 3-channel frame with values in `[0, 1]`.
pub fn decode_ppm(path: &Path, bytes: &[u8]) -> Result<FrameBuffer> {
    let mut pos = 0usize;
    let token = |pos: &mut usize| -> Result<String> {
        // Skip whitespace and `#` comments between header tokens.
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(parse_err(path, 1, "truncated PPM header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };

    let magic = token(&mut pos)?;
    if magic != "P6" {
        return Err(parse_err(path, 1, format!("expected P6 magic, got {magic:?}")));
    }
    let width: u32 = token(&mut pos)?
        .parse()
        .map_err(|_| parse_err(path, 1, "bad PPM width"))?;
    let height: u32 = token(&mut pos)?
        .parse()
        .map_err(|_| parse_err(path, 1, "bad PPM height"))?;
    let maxval: u32 = token(&mut pos)?
        .parse()
        .map_err(|_| parse_err(path, 1, "bad PPM maxval"))?;
    if maxval != 255 {
        return Err(parse_err(path, 1, format!("unsupported PPM maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from pixel data.
    pos += 1;
    let need = width as usize * height as usize * 3;
    if bytes.len() < pos + need {
        return Err(parse_err(
            path,
            1,
            format!("PPM pixel data truncated: need {need} bytes"),
        ));
    }
    let data: Vec<f64> = bytes[pos..pos + need]
        .iter()
        .map(|b| *b as f64 / 255.0)
        .collect();
    FrameBuffer::new(width, height, 3, data)
}

pub fn read_ppm(path: &Path) -> Result<FrameBuffer> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(|e| Error::io(path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode_ppm(path, &bytes)
}

// ---------------------------------------------------------------------------
// Clip manifests

/// A clip: frame dimensions, frame rate, and one image path per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    /// Absolute or manifest-relative paths, already resolved.
    pub frame_paths: Vec<PathBuf>,
}

impl Manifest {
    pub fn frame_count(&self) -> usize {
        self.frame_paths.len()
    }
}

/// Parse a manifest: first non-comment line `width height fps`, then one
/// frame path per line. Relative paths resolve against the manifest's
/// directory. Empty frame lists are rejected.
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut header: Option<(u32, u32, f64)> = None;
    let mut frame_paths = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if header.is_none() {
            let parts: Vec<&str> = trimmed.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(parse_err(
                    path,
                    lineno,
                    "manifest header must be `width height fps`",
                ));
            }
            let w: u32 = parts[0]
                .parse()
                .map_err(|_| parse_err(path, lineno, "bad manifest width"))?;
            let h: u32 = parts[1]
                .parse()
                .map_err(|_| parse_err(path, lineno, "bad manifest height"))?;
            let fps: f64 = parts[2]
                .parse()
                .map_err(|_| parse_err(path, lineno, "bad manifest fps"))?;
            if w == 0 || h == 0 || !fps.is_finite() || fps <= 0.0 {
                return Err(parse_err(path, lineno, "manifest header values out of range"));
            }
            header = Some((w, h, fps));
        } else {
            let p = Path::new(trimmed);
            let resolved = if p.is_absolute() {
                p.to_path_buf()
            } else {
                dir.join(p)
            };
            frame_paths.push(resolved);
        }
    }
    let (width, height, fps) =
        header.ok_or_else(|| parse_err(path, 1, "manifest missing header line"))?;
    if frame_paths.is_empty() {
        return Err(parse_err(path, 1, "manifest lists no frames"));
    }
    Ok(Manifest {
        width,
        height,
        fps,
        frame_paths,
    })
}

pub fn write_manifest(path: &Path, manifest: &Manifest, relative_to: Option<&Path>) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "{} {} {}\n",
        manifest.width, manifest.height, manifest.fps
    ));
    for p in &manifest.frame_paths {
        let shown = match relative_to {
            Some(base) => p.strip_prefix(base).unwrap_or(p),
            None => p,
        };
        out.push_str(&format!("{}\n", shown.display()));
    }
    write_atomic(path, out.as_bytes())
}

// ---------------------------------------------------------------------------
// Track and detection text files
//
// One record per line: `frame_index cx cy w h score [provenance]`.
// Floats use Rust's shortest round-trip formatting. `#` starts a comment.

pub fn format_track(track: &Track) -> String {
    let mut out = String::new();
    for e in track.entries() {
        let b = &e.bbox;
        out.push_str(&format!(
            "{} {} {} {} {} {} {}\n",
            e.frame_index,
            b.cx,
            b.cy,
            b.w,
            b.h,
            b.score,
            e.provenance.code()
        ));
    }
    out
}

pub fn write_track(path: &Path, track: &Track) -> Result<()> {
    write_atomic(path, format_track(track).as_bytes())
}

/// Read a track file. Requires provenance codes on every line and full
/// frame coverage for the given frame count and size.
pub fn read_track(path: &Path, frame_count: usize, frame_size: (u32, u32)) -> Result<Track> {
    let records = read_records(path)?;
    let mut entries = Vec::with_capacity(records.len());
    for r in records {
        let prov = r
            .provenance
            .ok_or_else(|| parse_err(path, r.line, "track line missing provenance code"))?;
        entries.push(TrackEntry {
            frame_index: r.frame_index,
            bbox: r.bbox,
            provenance: prov,
        });
    }
    Track::new(entries, frame_count, frame_size)
}

/// One detection record: a frame index and a box. Detection files may hold
/// several records per frame and need not cover every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub frame_index: usize,
    pub bbox: BBox,
}

pub fn format_detections(records: &[DetectionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let b = &r.bbox;
        out.push_str(&format!(
            "{} {} {} {} {} {}\n",
            r.frame_index, b.cx, b.cy, b.w, b.h, b.score
        ));
    }
    out
}

pub fn write_detections(path: &Path, records: &[DetectionRecord]) -> Result<()> {
    write_atomic(path, format_detections(records).as_bytes())
}

pub fn read_detection_records(path: &Path) -> Result<Vec<DetectionRecord>> {
    let records = read_records(path)?;
    Ok(records
        .into_iter()
        .map(|r| DetectionRecord {
            frame_index: r.frame_index,
            bbox: r.bbox,
        })
        .collect())
}

struct RawRecord {
    line: usize,
    frame_index: usize,
    bbox: BBox,
    provenance: Option<Provenance>,
}

fn read_records(path: &Path) -> Result<Vec<RawRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let body = match line.find('#') {
            Some(i) => &line[..i],
            None => &line[..],
        };
        let parts: Vec<&str> = body.split_whitespace().collect();
        if parts.is_empty() {
            continue;
        }
        if parts.len() != 6 && parts.len() != 7 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected 6 or 7 fields, got {}", parts.len()),
            ));
        }
        let frame_index: usize = parts[0]
            .parse()
            .map_err(|_| parse_err(path, lineno, "bad frame index"))?;
        let mut nums = [0.0f64; 5];
        for (i, p) in parts[1..6].iter().enumerate() {
            nums[i] = p
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad number {p:?}")))?;
        }
        let bbox = BBox::new(nums[0], nums[1], nums[2], nums[3], nums[4])
            .map_err(|e| parse_err(path, lineno, e.to_string()))?;
        let provenance = if parts.len() == 7 {
            Some(
                Provenance::from_code(parts[6])
                    .map_err(|e| parse_err(path, lineno, e.to_string()))?,
            )
        } else {
            None
        };
        out.push(RawRecord {
            line: lineno,
            frame_index,
            bbox,
            provenance,
        });
    }
    Ok(out)
}
