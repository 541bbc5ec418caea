use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Overlapping spatial regions laid out on a half-size stride lattice.
///
/// Anchors are every multiple of the stride that lies inside the frame, so the
/// last row and column of regions may hang past the frame edge; those pixels
/// are zero-padded when volumes are cut.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionGrid {
    frame_height: usize,
    frame_width: usize,
    region_height: usize,
    region_width: usize,
    rows: usize,
    cols: usize,
}

/// Top-left anchor of one region, in frame pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Anchor {
    pub x0: usize,
    pub y0: usize,
}

impl RegionGrid {
    pub fn new(frame_dims: (usize, usize), region_size: (usize, usize)) -> Result<Self> {
        let (fh, fw) = frame_dims;
        let (h, w) = region_size;
        if fh == 0 || fw == 0 {
            return Err(Error::Config(format!("frame size {fh}x{fw} is empty")));
        }
        if h == 0 || w == 0 {
            return Err(Error::Config(format!("region size {h}x{w} must be positive")));
        }
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Config(format!(
                "region size {h}x{w} must be even so the half-size stride is integral"
            )));
        }
        if h > 2 * fh || w > 2 * fw {
            return Err(Error::Config(format!(
                "region size {h}x{w} exceeds twice the frame size {fh}x{fw}"
            )));
        }
        Ok(Self {
            frame_height: fh,
            frame_width: fw,
            region_height: h,
            region_width: w,
            rows: fh.div_ceil(h / 2),
            cols: fw.div_ceil(w / 2),
        })
    }

    /// `(H, W)`.
    pub fn frame_dims(&self) -> (usize, usize) {
        (self.frame_height, self.frame_width)
    }

    /// `(h, w)`.
    pub fn region_size(&self) -> (usize, usize) {
        (self.region_height, self.region_width)
    }

    /// `(h/2, w/2)`.
    pub fn stride(&self) -> (usize, usize) {
        (self.region_height / 2, self.region_width / 2)
    }

    /// `(rows, cols)` of the anchor lattice.
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Regions are indexed row-major over the anchor lattice.
    pub fn anchor(&self, index: usize) -> Anchor {
        let (sy, sx) = self.stride();
        Anchor {
            x0: (index % self.cols) * sx,
            y0: (index / self.cols) * sy,
        }
    }

    pub fn anchors(&self) -> impl Iterator<Item = Anchor> + '_ {
        (0..self.len()).map(|i| self.anchor(i))
    }

    /// In-frame pixel rectangle of a region as `(x0, y0, x1, y1)`, exclusive ends.
    pub fn clipped_bounds(&self, index: usize) -> (usize, usize, usize, usize) {
        let a = self.anchor(index);
        (
            a.x0,
            a.y0,
            (a.x0 + self.region_width).min(self.frame_width),
            (a.y0 + self.region_height).min(self.frame_height),
        )
    }

    /// Indices of all regions containing frame pixel `(x, y)`.
    pub fn regions_containing(&self, x: usize, y: usize) -> Vec<usize> {
        let (sy, sx) = self.stride();
        let row_hi = (y / sy).min(self.rows - 1);
        let col_hi = (x / sx).min(self.cols - 1);
        let mut out = Vec::with_capacity(4);
        for r in row_hi.saturating_sub(1)..=row_hi {
            for c in col_hi.saturating_sub(1)..=col_hi {
                let a = self.anchor(r * self.cols + c);
                if y >= a.y0 && y < a.y0 + self.region_height && x >= a.x0 && x < a.x0 + self.region_width {
                    out.push(r * self.cols + c);
                }
            }
        }
        out
    }
}

pub fn build_region_grid(frame_dims: (usize, usize), region_size: (usize, usize)) -> Result<RegionGrid> {
    RegionGrid::new(frame_dims, region_size)
}
