//! Dense optical flow fields and the Middlebury `.flo` container.
//!
//! A `.flo` file is little-endian: the magic float `202021.25`, width and
//! height as `i32`, then `width * height` interleaved `(u, v)` `f32` pairs in
//! row-major order. Within a flow directory, file `i` (numeric order) holds
//! the motion from frame `i` to frame `i + 1`.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::ingest::frames::numbered_files;

pub const FLO_MAGIC: f32 = 202021.25;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        let n = width * height;
        if u.len() != n || v.len() != n {
            return Err(Error::Dimension(format!(
                "flow {width}x{height} needs {n} values per channel, got u={} v={}",
                u.len(),
                v.len()
            )));
        }
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("flow contains non-finite values".into()));
        }
        Ok(Self { width, height, u, v })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            u: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// Builds a field by evaluating `f(x, y) -> (u, v)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> (f32, f32)) -> Self {
        let mut u = Vec::with_capacity(width * height);
        let mut v = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(x, y);
                u.push(a);
                v.push(b);
            }
        }
        Self { width, height, u, v }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(H, W)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    /// Crops an `h x w` window anchored at `(x0, y0)`; samples outside the field are zero.
    pub fn crop_padded(&self, x0: usize, y0: usize, w: usize, h: usize) -> FlowField {
        let mut out = FlowField::zeros(w, h);
        let rows = h.min(self.height.saturating_sub(y0));
        let cols = w.min(self.width.saturating_sub(x0));
        for dy in 0..rows {
            let src = (y0 + dy) * self.width + x0;
            let dst = dy * w;
            out.u[dst..dst + cols].copy_from_slice(&self.u[src..src + cols]);
            out.v[dst..dst + cols].copy_from_slice(&self.v[src..src + cols]);
        }
        out
    }

    pub fn read_flo<R: Read>(mut r: R) -> Result<Self> {
        let magic = r
            .read_f32::<LittleEndian>()
            .map_err(|e| Error::from_read(e, "flow header"))?;
        if magic != FLO_MAGIC {
            return Err(Error::Format(format!("bad .flo magic {magic}, expected {FLO_MAGIC}")));
        }
        let width = r
            .read_i32::<LittleEndian>()
            .map_err(|e| Error::from_read(e, "flow header"))?;
        let height = r
            .read_i32::<LittleEndian>()
            .map_err(|e| Error::from_read(e, "flow header"))?;
        if width <= 0 || height <= 0 {
            return Err(Error::Format(format!("bad .flo size {width}x{height}")));
        }
        let (width, height) = (width as usize, height as usize);
        let n = width * height;
        let mut raw = vec![0f32; 2 * n];
        r.read_f32_into::<LittleEndian>(&mut raw)
            .map_err(|e| Error::from_read(e, "flow payload"))?;
        let (u, v) = raw.chunks_exact(2).map(|p| (p[0], p[1])).unzip();
        FlowField::new(width, height, u, v).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn write_flo<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_f32::<LittleEndian>(FLO_MAGIC)?;
        w.write_i32::<LittleEndian>(self.width as i32)?;
        w.write_i32::<LittleEndian>(self.height as i32)?;
        for (u, v) in self.u.iter().zip(&self.v) {
            w.write_f32::<LittleEndian>(*u)?;
            w.write_f32::<LittleEndian>(*v)?;
        }
        Ok(())
    }
}

pub fn load_flow(path: &Path) -> Result<FlowField> {
    let bytes = std::fs::read(path).map_err(|e| Error::ingest(path, e.to_string()))?;
    FlowField::read_flo(bytes.as_slice()).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_flow(flow: &FlowField, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + 8 * flow.width * flow.height);
    flow.write_flo(&mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// Loads every `.flo` in `dir` in frame-number order.
pub fn load_flow_dir(dir: &Path) -> Result<Vec<FlowField>> {
    numbered_files(dir, &["flo"])?.iter().map(|p| load_flow(p)).collect()
}

/// Writes `flows[i]` as `{i:06}.flo`.
pub fn write_flow_dir(flows: &[FlowField], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, f) in flows.iter().enumerate() {
        write_flow(f, &dir.join(format!("{i:06}.flo")))?;
    }
    Ok(())
}
