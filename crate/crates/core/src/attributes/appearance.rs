use serde::{Deserialize, Serialize};

use crate::ingest::VideoVolume;

pub const THUMB_SIDE: usize = 8;
pub const HIST_BINS: usize = 16;
/// 8x8 thumbnail plus three 16-bin channel histograms.
pub const BUILTIN_APP_DIM: usize = THUMB_SIDE * THUMB_SIDE + 3 * HIST_BINS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    Builtin,
    Imported,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceDescriptor {
    pub app: Vec<f32>,
    pub source: FeatureSource,
}

fn frame_descriptor(volume: &VideoVolume, k: usize, out: &mut [f64]) {
    let (h, w) = (volume.height(), volume.width());
    let (thumb, hist) = out.split_at_mut(THUMB_SIDE * THUMB_SIDE);

    for ty in 0..THUMB_SIDE {
        let (y0, y1) = (
            ty * h / THUMB_SIDE,
            ((ty + 1) * h / THUMB_SIDE).max(ty * h / THUMB_SIDE + 1),
        );
        for tx in 0..THUMB_SIDE {
            let (x0, x1) = (
                tx * w / THUMB_SIDE,
                ((tx + 1) * w / THUMB_SIDE).max(tx * w / THUMB_SIDE + 1),
            );
            let mut acc = 0.0;
            for y in y0..y1.min(h) {
                for x in x0..x1.min(w) {
                    let [r, g, b] = volume.pixel(k, y, x);
                    acc += 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
                }
            }
            let n = ((y1.min(h) - y0) * (x1.min(w) - x0)).max(1);
            thumb[ty * THUMB_SIDE + tx] = acc / (255.0 * n as f64);
        }
    }
    let norm = thumb.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        thumb.iter_mut().for_each(|x| *x /= norm);
    }

    for px in volume.frame(k).chunks_exact(3) {
        for c in 0..3 {
            hist[c * HIST_BINS + px[c] as usize * HIST_BINS / 256] += 1.0;
        }
    }
    let per_channel = (h * w) as f64;
    hist.iter_mut().for_each(|x| *x /= per_channel);
}

/// Frame-averaged thumbnail and color histogram. The average is left unnormalized.
pub fn builtin_appearance(volume: &VideoVolume) -> AppearanceDescriptor {
    let mut sum = vec![0f64; BUILTIN_APP_DIM];
    let mut frame = vec![0f64; BUILTIN_APP_DIM];
    for k in 0..volume.t() {
        frame.iter_mut().for_each(|x| *x = 0.0);
        frame_descriptor(volume, k, &mut frame);
        sum.iter_mut().zip(&frame).for_each(|(s, f)| *s += f);
    }
    let t = volume.t() as f64;
    AppearanceDescriptor {
        app: sum.into_iter().map(|s| (s / t) as f32).collect(),
        source: FeatureSource::Builtin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn volume(t: usize, f: impl Fn(usize, usize, usize) -> [u8; 3]) -> VideoVolume {
        let (h, w) = (16, 16);
        let mut px = Vec::with_capacity(h * w * 3 * t);
        for k in 0..t {
            for y in 0..h {
                for x in 0..w {
                    px.extend_from_slice(&f(k, y, x));
                }
            }
        }
        VideoVolume::from_pixels(0, 0, (h, w, t), px).unwrap()
    }

    #[test]
    fn mid_gray_closed_form() {
        let d = builtin_appearance(&volume(4, |_, _, _| [128, 128, 128]));
        assert_eq!(d.app.len(), 112);
        for &x in &d.app[..64] {
            assert!((x - 0.125).abs() < 1e-6);
        }
        // 128 / 16 = bin 8 in every channel
        for c in 0..3 {
            let h = &d.app[64 + 16 * c..64 + 16 * (c + 1)];
            assert_eq!(h[8], 1.0);
            assert_eq!(h.iter().sum::<f32>(), 1.0);
        }
    }

    #[test]
    fn frame_order_does_not_matter() {
        let a = volume(3, |k, y, x| [(k * 40 + y) as u8, (x * 7) as u8, 9]);
        let b = volume(3, |k, y, x| [((2 - k) * 40 + y) as u8, (x * 7) as u8, 9]);
        assert_eq!(builtin_appearance(&a).app, builtin_appearance(&b).app);
    }

    #[test]
    fn black_and_white_differ() {
        let black = builtin_appearance(&volume(2, |_, _, _| [0; 3]));
        let white = builtin_appearance(&volume(2, |_, _, _| [255; 3]));
        // black thumbnail has zero norm and stays zero; white is uniform 1/8
        assert!(black.app[..64].iter().all(|&x| x == 0.0));
        let d: f32 = black
            .app
            .iter()
            .zip(&white.app)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f32>()
            .sqrt();
        // thumbnail: 1.0, histograms: sqrt(3 * 2)
        assert!((d - (1.0f32 + 6.0).sqrt()).abs() < 1e-5, "{d}");
    }
}
