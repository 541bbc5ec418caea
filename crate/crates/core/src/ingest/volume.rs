use crate::error::{Error, Result};
use crate::ingest::flow::FlowField;
use crate::ingest::frames::FrameSequence;
use crate::ingest::grid::RegionGrid;

/// An `h x w x t` RGB block cut from one region of the grid.
///
/// Pixels are stored frame-major, then row, column, channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoVolume {
    pub region_index: usize,
    pub frame_start: usize,
    height: usize,
    width: usize,
    t: usize,
    pixels: Vec<u8>,
}

impl VideoVolume {
    pub fn from_pixels(
        region_index: usize,
        frame_start: usize,
        (height, width, t): (usize, usize, usize),
        pixels: Vec<u8>,
    ) -> Result<Self> {
        if height == 0 || width == 0 || t == 0 {
            return Err(Error::InvalidInput("video volume has an empty extent".into()));
        }
        if pixels.len() != height * width * 3 * t {
            return Err(Error::Dimension(format!(
                "volume {height}x{width}x{t} needs {} bytes, got {}",
                height * width * 3 * t,
                pixels.len()
            )));
        }
        Ok(Self {
            region_index,
            frame_start,
            height,
            width,
            t,
            pixels,
        })
    }

    /// Cuts region `region_index` out of frames `[frame_start, frame_start + t)`.
    pub fn crop(seq: &FrameSequence, grid: &RegionGrid, region_index: usize, frame_start: usize, t: usize) -> Self {
        let (h, w) = grid.region_size();
        let (x0, y0, x1, y1) = grid.clipped_bounds(region_index);
        let cols = x1 - x0;
        let mut pixels = vec![0u8; h * w * 3 * t];
        for (k, frame) in seq.frames()[frame_start..frame_start + t].iter().enumerate() {
            let raw = frame.as_raw();
            let fw = frame.width() as usize;
            for y in y0..y1 {
                let src = (y * fw + x0) * 3;
                let dst = ((k * h + (y - y0)) * w) * 3;
                pixels[dst..dst + cols * 3].copy_from_slice(&raw[src..src + cols * 3]);
            }
        }
        Self {
            region_index,
            frame_start,
            height: h,
            width: w,
            t,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// RGB bytes of frame `k` within the volume.
    pub fn frame(&self, k: usize) -> &[u8] {
        let n = self.height * self.width * 3;
        &self.pixels[k * n..(k + 1) * n]
    }

    #[inline]
    pub fn pixel(&self, k: usize, y: usize, x: usize) -> [u8; 3] {
        let i = ((k * self.height + y) * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

/// Cuts the `t - 1` flow fields belonging to a volume, zero-padded like the pixels.
pub fn crop_flow_volume(
    flows: &[FlowField],
    grid: &RegionGrid,
    region_index: usize,
    frame_start: usize,
    t: usize,
) -> Result<Vec<FlowField>> {
    let (h, w) = grid.region_size();
    let a = grid.anchor(region_index);
    (frame_start..frame_start + t - 1)
        .map(|i| {
            let f = flows.get(i).ok_or(Error::MissingFlow { from: i, to: i + 1 })?;
            if f.dims() != grid.frame_dims() {
                return Err(Error::Dimension(format!(
                    "flow {i} is {}x{}, frames are {}x{}",
                    f.height(),
                    f.width(),
                    grid.frame_dims().0,
                    grid.frame_dims().1
                )));
            }
            Ok(f.crop_padded(a.x0, a.y0, w, h))
        })
        .collect()
}

/// Frame offsets of the complete, non-overlapping temporal windows.
pub fn window_starts(frame_count: usize, t: usize) -> impl Iterator<Item = usize> {
    (0..frame_count / t.max(1)).map(move |k| k * t)
}

/// Iterator over all volumes of a sequence: window by window, regions in grid order.
pub struct VolumeStream<'a> {
    seq: &'a FrameSequence,
    grid: &'a RegionGrid,
    t: usize,
    windows: usize,
    next: usize,
}

impl Iterator for VolumeStream<'_> {
    type Item = VideoVolume;

    fn next(&mut self) -> Option<VideoVolume> {
        let total = self.windows * self.grid.len();
        if self.next >= total {
            return None;
        }
        let window = self.next / self.grid.len();
        let region = self.next % self.grid.len();
        self.next += 1;
        Some(VideoVolume::crop(self.seq, self.grid, region, window * self.t, self.t))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.windows * self.grid.len() - self.next;
        (left, Some(left))
    }
}

impl ExactSizeIterator for VolumeStream<'_> {}

/// Trailing frames that do not fill a whole window are dropped.
pub fn extract_volumes<'a>(seq: &'a FrameSequence, grid: &'a RegionGrid, t: usize) -> Result<VolumeStream<'a>> {
    if t == 0 {
        return Err(Error::Config("temporal extent t must be positive".into()));
    }
    if seq.dims() != grid.frame_dims() {
        return Err(Error::Dimension(format!(
            "frames are {:?}, grid expects {:?}",
            seq.dims(),
            grid.frame_dims()
        )));
    }
    if seq.len() < t {
        return Err(Error::InvalidInput(format!(
            "sequence has {} frames, fewer than t = {t}",
            seq.len()
        )));
    }
    Ok(VolumeStream {
        seq,
        grid,
        t,
        windows: seq.len() / t,
        next: 0,
    })
}
