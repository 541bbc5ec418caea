use std::path::{Path, PathBuf};

use image::RgbImage;

use crate::error::{Error, Result};

const IMAGE_EXTENSIONS: &[&str] = &["png", "ppm", "pgm", "pnm", "jpg", "jpeg", "bmp"];

/// An ordered, non-empty run of equally sized RGB frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<RgbImage>,
    /// Metadata only; nothing in the pipeline depends on it.
    pub frame_rate: f64,
}

impl FrameSequence {
    pub fn new(frames: Vec<RgbImage>, frame_rate: f64) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidInput("frame sequence is empty".into()))?;
        let dims = first.dimensions();
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.dimensions() != dims) {
            return Err(Error::Dimension(format!(
                "frame {i} is {}x{}, expected {}x{}",
                f.width(),
                f.height(),
                dims.0,
                dims.1
            )));
        }
        Ok(Self { frames, frame_rate })
    }

    pub fn frames(&self) -> &[RgbImage] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width() as usize
    }

    pub fn height(&self) -> usize {
        self.frames[0].height() as usize
    }

    /// `(H, W)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.height(), self.width())
    }
}

/// Extracts the last run of ASCII digits in a file stem (`frame_0012` -> 12).
pub(crate) fn numeric_key(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let end = stem.rfind(|c: char| c.is_ascii_digit())? + 1;
    let start = stem[..end].rfind(|c: char| !c.is_ascii_digit()).map_or(0, |i| i + 1);
    stem[start..end].parse().ok()
}

/// Lists files with one of `extensions` in `dir`, sorted by the number embedded in their stem.
pub(crate) fn numbered_files(dir: &Path, extensions: &[&str]) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::ingest(dir, e.to_string()))?;
    let mut keyed = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::ingest(dir, e.to_string()))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext {
            Some(ext) if extensions.contains(&ext.as_str()) => {}
            _ => continue,
        }
        let key = numeric_key(&path).ok_or_else(|| Error::ingest(&path, "file name carries no frame number"))?;
        keyed.push((key, path));
    }
    keyed.sort();
    for pair in keyed.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::ingest(
                &pair[1].1,
                format!("frame number {} also used by {}", pair[0].0, pair[0].1.display()),
            ));
        }
    }
    Ok(keyed.into_iter().map(|(_, p)| p).collect())
}

/// Loads every image in `dir`, ordered by the frame number in the file name.
pub fn load_frame_sequence(dir: &Path) -> Result<FrameSequence> {
    let paths = numbered_files(dir, IMAGE_EXTENSIONS)?;
    if paths.is_empty() {
        return Err(Error::ingest(dir, "no image files found"));
    }
    let mut frames: Vec<RgbImage> = Vec::with_capacity(paths.len());
    for path in &paths {
        let img = image::open(path)
            .map_err(|e| Error::ingest(path, format!("cannot decode image: {e}")))?
            .to_rgb8();
        if let Some(first) = frames.first() {
            if first.dimensions() != img.dimensions() {
                return Err(Error::ingest(
                    path,
                    format!(
                        "frame is {}x{} but {} is {}x{}",
                        img.width(),
                        img.height(),
                        paths[0].display(),
                        first.width(),
                        first.height()
                    ),
                ));
            }
        }
        frames.push(img);
    }
    FrameSequence::new(frames, 0.0)
}

/// Writes frames as zero-padded numbered PNGs (`000000.png`, ...).
pub fn write_frame_sequence(seq: &FrameSequence, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, frame) in seq.frames().iter().enumerate() {
        let path = dir.join(format!("{i:06}.png"));
        frame
            .save(&path)
            .map_err(|e| Error::ingest(&path, format!("cannot encode image: {e}")))?;
    }
    Ok(())
}
