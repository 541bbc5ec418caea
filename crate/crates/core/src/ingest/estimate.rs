//! Coarse-to-fine Horn-Schunck flow with iterative warping.
//!
//! Good enough for smooth synthetic sequences and small displacements; real
//! footage should come with precomputed `.flo` files.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::flow::FlowField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowEstimatorParams {
    /// Pyramid depth including the full-resolution level.
    pub levels: usize,
    /// Jacobi iterations per warp.
    pub iterations: usize,
    pub warps: usize,
    /// Smoothness weight, in intensity units (0..255 images).
    pub alpha: f32,
}

impl Default for FlowEstimatorParams {
    fn default() -> Self {
        Self {
            levels: 3,
            iterations: 100,
            warps: 3,
            alpha: 15.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Plane {
    fn gray(img: &RgbImage) -> Self {
        let data = img
            .pixels()
            .map(|p| 0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32)
            .collect();
        Self {
            w: img.width() as usize,
            h: img.height() as usize,
            data,
        }
    }

    #[inline]
    fn at(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.data[y * self.w + x]
    }

    fn bilinear(&self, x: f32, y: f32) -> f32 {
        let x = x.clamp(0.0, (self.w - 1) as f32);
        let y = y.clamp(0.0, (self.h - 1) as f32);
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (x0, y0) = (x0 as isize, y0 as isize);
        let top = self.at(x0, y0) * (1.0 - fx) + self.at(x0 + 1, y0) * fx;
        let bot = self.at(x0, y0 + 1) * (1.0 - fx) + self.at(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    /// [1 2 1]/4 blur followed by 2x decimation.
    fn downsample(&self) -> Self {
        let w = self.w.div_ceil(2);
        let h = self.h.div_ceil(2);
        let k = [0.25f32, 0.5, 0.25];
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let (cx, cy) = (2 * x as isize, 2 * y as isize);
                let mut acc = 0.0;
                for (j, ky) in k.iter().enumerate() {
                    for (i, kx) in k.iter().enumerate() {
                        acc += kx * ky * self.at(cx + i as isize - 1, cy + j as isize - 1);
                    }
                }
                data.push(acc);
            }
        }
        Self { w, h, data }
    }
}

fn pyramid(base: Plane, levels: usize) -> Vec<Plane> {
    let mut out = vec![base];
    while out.len() < levels {
        let last = out.last().unwrap();
        if last.w < 8 || last.h < 8 {
            break;
        }
        let next = last.downsample();
        out.push(next);
    }
    out
}

/// Resamples a flow component to a new size, scaling vectors by the size ratio.
fn upsample(src: &[f32], (sw, sh): (usize, usize), (dw, dh): (usize, usize)) -> Vec<f32> {
    let plane = Plane {
        w: sw,
        h: sh,
        data: src.to_vec(),
    };
    let (rx, ry) = (sw as f32 / dw as f32, sh as f32 / dh as f32);
    let scale = dw as f32 / sw as f32;
    let mut out = Vec::with_capacity(dw * dh);
    for y in 0..dh {
        for x in 0..dw {
            let sx = (x as f32 + 0.5) * rx - 0.5;
            let sy = (y as f32 + 0.5) * ry - 0.5;
            out.push(plane.bilinear(sx, sy) * scale);
        }
    }
    out
}

fn refine(a: &Plane, b: &Plane, u: &mut [f32], v: &mut [f32], params: &FlowEstimatorParams) {
    let (w, h) = (a.w, a.h);
    let alpha2 = params.alpha * params.alpha;
    let mut ix = vec![0f32; w * h];
    let mut iy = vec![0f32; w * h];
    let mut it = vec![0f32; w * h];
    for _ in 0..params.warps {
        let warped = Plane {
            w,
            h,
            data: (0..w * h)
                .map(|i| b.bilinear((i % w) as f32 + u[i], (i / w) as f32 + v[i]))
                .collect(),
        };
        for y in 0..h as isize {
            for x in 0..w as isize {
                let i = y as usize * w + x as usize;
                let gx = 0.5 * (a.at(x + 1, y) - a.at(x - 1, y) + warped.at(x + 1, y) - warped.at(x - 1, y));
                let gy = 0.5 * (a.at(x, y + 1) - a.at(x, y - 1) + warped.at(x, y + 1) - warped.at(x, y - 1));
                ix[i] = 0.5 * gx;
                iy[i] = 0.5 * gy;
                it[i] = warped.data[i] - a.data[i];
            }
        }
        let u0 = u.to_vec();
        let v0 = v.to_vec();
        let mut un = u.to_vec();
        let mut vn = v.to_vec();
        for _ in 0..params.iterations {
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    let xl = if x > 0 { i - 1 } else { i };
                    let xr = if x + 1 < w { i + 1 } else { i };
                    let yu = if y > 0 { i - w } else { i };
                    let yd = if y + 1 < h { i + w } else { i };
                    let ubar = 0.25 * (u[xl] + u[xr] + u[yu] + u[yd]);
                    let vbar = 0.25 * (v[xl] + v[xr] + v[yu] + v[yd]);
                    let r = it[i] + ix[i] * (ubar - u0[i]) + iy[i] * (vbar - v0[i]);
                    let den = alpha2 + ix[i] * ix[i] + iy[i] * iy[i];
                    un[i] = ubar - ix[i] * r / den;
                    vn[i] = vbar - iy[i] * r / den;
                }
            }
            u.copy_from_slice(&un);
            v.copy_from_slice(&vn);
        }
    }
}

/// Estimates the flow that maps frame `a` onto frame `b`.
pub fn estimate_flow(a: &RgbImage, b: &RgbImage, params: &FlowEstimatorParams) -> Result<FlowField> {
    if a.dimensions() != b.dimensions() {
        return Err(Error::Dimension(format!(
            "flow frames differ in size: {:?} vs {:?}",
            a.dimensions(),
            b.dimensions()
        )));
    }
    if params.levels == 0 {
        return Err(Error::Config("flow estimator needs at least one pyramid level".into()));
    }
    let pa = pyramid(Plane::gray(a), params.levels);
    let pb = pyramid(Plane::gray(b), params.levels);
    let coarsest = pa.last().unwrap();
    let mut u = vec![0f32; coarsest.w * coarsest.h];
    let mut v = u.clone();
    let mut size = (coarsest.w, coarsest.h);
    for (la, lb) in pa.iter().zip(&pb).rev() {
        if size != (la.w, la.h) {
            u = upsample(&u, size, (la.w, la.h));
            v = upsample(&v, size, (la.w, la.h));
            size = (la.w, la.h);
        }
        refine(la, lb, &mut u, &mut v, params);
    }
    FlowField::new(size.0, size.1, u, v)
}

/// Mean absolute brightness-constancy residual `|b(x + flow) - a(x)|` in gray levels.
pub fn brightness_residual(a: &RgbImage, b: &RgbImage, flow: &FlowField) -> Result<f64> {
    if a.dimensions() != b.dimensions() || (flow.width() as u32, flow.height() as u32) != a.dimensions() {
        return Err(Error::Dimension("residual inputs differ in size".into()));
    }
    let pa = Plane::gray(a);
    let pb = Plane::gray(b);
    let mut total = 0.0f64;
    for y in 0..pa.h {
        for x in 0..pa.w {
            let (u, v) = flow.at(x, y);
            let warped = pb.bilinear(x as f32 + u, y as f32 + v);
            total += (warped - pa.data[y * pa.w + x]).abs() as f64;
        }
    }
    Ok(total / (pa.w * pa.h) as f64)
}
