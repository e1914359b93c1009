//! Clip loading shared by the subcommands.

use std::path::Path;

use autozoom::error::{Error, Result};
use autozoom::frame::FrameBuffer;
use autozoom::io::{read_manifest, read_ppm, Manifest};

/// Read a manifest and require every referenced frame file to exist.
pub fn load_manifest_checked(path: &Path) -> Result<Manifest> {
    let manifest = read_manifest(path)?;
    for p in &manifest.frame_paths {
        if !p.is_file() {
            return Err(Error::io(
                p.clone(),
                std::io::Error::new(std::io::ErrorKind::NotFound, "frame file missing"),
            ));
        }
    }
    Ok(manifest)
}

pub fn read_frames(manifest: &Manifest) -> Result<Vec<FrameBuffer>> {
    manifest.frame_paths.iter().map(|p| read_ppm(p)).collect()
}
