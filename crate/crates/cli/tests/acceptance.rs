//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vad_core::attributes::{
    compute_motion_attributes, FeatureSource, FlowThresholds, MotionAttributes, BUILTIN_APP_DIM,
};
use vad_core::evaluate::{
    extract_detections, frame_auc, rbdc_auc, tbdc_auc, threshold_sweep, CriterionParams, GroundTruth, PixelBox,
};
use vad_core::explain::{explain_score, verdict, ExplainOptions, Verdict};
use vad_core::extract::{extract_video_features, VideoInput};
use vad_core::features::{feature_distance, ComponentDims, FeatureVector, Normalizers};
use vad_core::image::{Rgb, RgbImage};
use vad_core::ingest::{build_region_grid, write_flow_dir, write_frame_sequence, FlowField, FrameSequence, RegionGrid};
use vad_core::model::{
    build_scene_model, update_scene_model, KeyedFeature, ModelSpec, NormalizerChoice, Provenance, RegionModel,
};
use vad_core::scoring::{accumulate, detect, DetectOptions, ScoreMap, VolumeScore};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

// ---------------------------------------------------------------------------
// synthetic data

fn random_flow(rng: &mut ChaCha8Rng, w: usize, h: usize) -> FlowField {
    FlowField::from_fn(w, h, |_, _| match rng.gen_range(0..10) {
        0 => (0.0, 0.0),
        // exact axis directions and exact threshold magnitude
        1 => [
            (1.0, 0.0),
            (0.0, 1.0),
            (-1.0, 0.0),
            (0.0, -1.0),
            (2.0, 0.0),
            (0.0, -3.0),
        ][rng.gen_range(0..6)],
        2 => (rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7)),
        _ => (rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)),
    })
}

/// Naive per-pixel reference: fractions from integer counts, means from a running sum.
fn motion_oracle(flows: &[FlowField], th: &FlowThresholds) -> MotionAttributes {
    let mut counts = [0usize; 12];
    let mut sums = [0f64; 12];
    let mut still = 0usize;
    let mut total = 0usize;
    for f in flows {
        for y in 0..f.height() {
            for x in 0..f.width() {
                let (u, v) = f.at(x, y);
                let (u, v) = (u as f64, v as f64);
                total += 1;
                let m = (u * u + v * v).sqrt();
                if m < th.th_mot {
                    still += 1;
                    continue;
                }
                let mut theta = v.atan2(u);
                if theta < 0.0 {
                    theta += 2.0 * PI;
                }
                let bin = ((theta / (PI / 6.0)).floor() as usize).min(11);
                counts[bin] += 1;
                sums[bin] += m;
            }
        }
    }
    let mut ang = [0.0; 12];
    let mut mag = [0.0; 12];
    for b in 0..12 {
        ang[b] = counts[b] as f64 / total as f64;
        mag[b] = if counts[b] == 0 {
            0.0
        } else {
            sums[b] / counts[b] as f64
        };
    }
    let bkg = still as f64 / total as f64;
    MotionAttributes {
        ang,
        mag,
        bkg,
        cls: bkg >= th.th_bkg,
    }
}

fn random_feature(rng: &mut ChaCha8Rng, dims: &ComponentDims) -> FeatureVector {
    let mut v = |n: usize, scale: f32| (0..n).map(|_| rng.gen_range(0.0..scale)).collect::<Vec<f32>>();
    let (app, ang, mag, bkg) = (v(dims.app, 1.0), v(dims.ang, 0.2), v(dims.mag, 4.0), v(dims.bkg, 1.0));
    FeatureVector::new(app, ang, mag, bkg, rng.gen_bool(0.2)).unwrap()
}

const SIDE: usize = 64;
const LANE_ROWS: std::ops::Range<usize> = 20..28;
const LANE_PERIOD: i64 = 16;
const LANE_WIDTH: i64 = 8;
const LANE_SPEED: i64 = 2;

/// 12x12 block moving right at 1 px/frame through the bottom (normally static) area.
#[derive(Clone, Copy)]
struct Intruder {
    x0: usize,
    y0: usize,
}

const INTRUDER: usize = 12;

impl Intruder {
    fn x_at(&self, frame: usize) -> usize {
        self.x0 + frame
    }

    fn covers(&self, frame: usize, x: usize, y: usize) -> bool {
        let xs = self.x_at(frame);
        (xs..xs + INTRUDER).contains(&x) && (self.y0..self.y0 + INTRUDER).contains(&y)
    }
}

fn background(x: usize, y: usize) -> Rgb<u8> {
    let check = ((x / 8 + y / 8) % 2) as u8;
    Rgb([60 + (x * 2) as u8, 90 + 40 * check, 70 + (y * 2) as u8])
}

/// Lane scene: blocks of width 8, period 16, moving `dir` (+1 right, -1 left) at 2 px/frame.
/// Flow is analytic: exactly the block displacement on block pixels, zero elsewhere.
fn lane_scene(frames: usize, dir: i64, phase: i64, intruder: Option<Intruder>) -> VideoInput {
    let on_lane = |x: usize, y: usize, i: usize| {
        LANE_ROWS.contains(&y) && (x as i64 - dir * LANE_SPEED * i as i64 - phase).rem_euclid(LANE_PERIOD) < LANE_WIDTH
    };
    let images = (0..frames)
        .map(|i| {
            RgbImage::from_fn(SIDE as u32, SIDE as u32, |x, y| {
                let (x, y) = (x as usize, y as usize);
                if intruder.is_some_and(|b| b.covers(i, x, y)) {
                    Rgb([40, 40, 220])
                } else if on_lane(x, y, i) {
                    Rgb([220, 40, 40])
                } else {
                    background(x, y)
                }
            })
        })
        .collect();
    let flows = (0..frames - 1)
        .map(|i| {
            FlowField::from_fn(SIDE, SIDE, |x, y| {
                if intruder.is_some_and(|b| b.covers(i, x, y)) {
                    (1.0, 0.0)
                } else if on_lane(x, y, i) {
                    ((dir * LANE_SPEED) as f32, 0.0)
                } else {
                    (0.0, 0.0)
                }
            })
        })
        .collect();
    VideoInput::new(FrameSequence::new(images, 30.0).unwrap(), flows).unwrap()
}

fn scene_grid() -> RegionGrid {
    build_region_grid((SIDE, SIDE), (32, 32)).unwrap()
}

fn builtin_spec(grid: RegionGrid, t: usize, th: f32) -> ModelSpec {
    ModelSpec {
        grid,
        t,
        th,
        dims: ComponentDims::builtin(BUILTIN_APP_DIM),
        source: FeatureSource::Builtin,
        flow_thresholds: FlowThresholds::default(),
    }
}

fn scene_features(video: &VideoInput, t: usize) -> Vec<KeyedFeature> {
    extract_video_features(video, &scene_grid(), t, &FlowThresholds::default()).unwrap()
}

// ---------------------------------------------------------------------------
// criteria

fn motion_oracle_criterion() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let th = FlowThresholds::default();
    for case in 0..200 {
        let (w, h, n) = (rng.gen_range(1..=8), rng.gen_range(1..=8), rng.gen_range(1..=9));
        let flows: Vec<FlowField> = (0..n).map(|_| random_flow(&mut rng, w, h)).collect();
        let got = compute_motion_attributes(&flows, &th).map_err(|e| e.to_string())?;
        let want = motion_oracle(&flows, &th);
        check!(
            got.ang == want.ang,
            "case {case}: ang {:?} != oracle {:?}",
            got.ang,
            want.ang
        );
        check!(
            got.bkg == want.bkg,
            "case {case}: bkg {} != oracle {}",
            got.bkg,
            want.bkg
        );
        check!(got.cls == want.cls, "case {case}: cls differs");
        for b in 0..12 {
            check!(
                (got.mag[b] - want.mag[b]).abs() <= 1e-9,
                "case {case}: mag[{b}] {} vs {}",
                got.mag[b],
                want.mag[b]
            );
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check!(secs < 5.0, "took {secs:.2} s");
    Ok(format!("200 volumes match the per-pixel oracle ({secs:.2} s)"))
}

fn rotate(f: &FlowField, angle: f64) -> FlowField {
    let (c, s) = (angle.cos(), angle.sin());
    FlowField::from_fn(f.width(), f.height(), |x, y| {
        let (u, v) = f.at(x, y);
        let (u, v) = (u as f64, v as f64);
        ((c * u - s * v) as f32, (s * u + c * v) as f32)
    })
}

fn normalization_criterion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let th = FlowThresholds::default();
    for case in 0..200 {
        let (w, h, n) = (rng.gen_range(1..=8), rng.gen_range(1..=8), rng.gen_range(1..=9));
        let flows: Vec<FlowField> = (0..n).map(|_| random_flow(&mut rng, w, h)).collect();
        let m = compute_motion_attributes(&flows, &th).map_err(|e| e.to_string())?;
        let total = m.ang.iter().sum::<f64>() + m.bkg;
        check!((total - 1.0).abs() <= 1e-6, "case {case}: sum(ang)+bkg = {total}");
    }
    // vectors well inside their bins and well away from th_mot survive a 30 degree turn
    for case in 0..100 {
        let (w, h) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let flows: Vec<FlowField> = (0..rng.gen_range(1..=9))
            .map(|_| {
                FlowField::from_fn(w, h, |_, _| {
                    if rng.gen_bool(0.3) {
                        (0.1, -0.2)
                    } else {
                        let bin = rng.gen_range(0..12) as f64;
                        let a = (bin + rng.gen_range(0.2..0.8)) * PI / 6.0;
                        let r = rng.gen_range(1.5..5.0);
                        ((r * a.cos()) as f32, (r * a.sin()) as f32)
                    }
                })
            })
            .collect();
        let before = compute_motion_attributes(&flows, &th).unwrap();
        let rotated: Vec<FlowField> = flows.iter().map(|f| rotate(f, PI / 6.0)).collect();
        let after = compute_motion_attributes(&rotated, &th).unwrap();
        for b in 0..12 {
            let next = (b + 1) % 12;
            check!(
                after.ang[next] == before.ang[b],
                "case {case}: ang bin {b} did not move to {next}"
            );
            check!(
                (after.mag[next] - before.mag[b]).abs() < 1e-5,
                "case {case}: mag bin {b} changed"
            );
        }
        check!(after.bkg == before.bkg, "case {case}: bkg changed under rotation");
    }
    Ok("sum(ang)+bkg = 1 on 200 volumes; 30 degree rotation shifts bins by one on 100 volumes".into())
}

fn metric_criterion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dims = ComponentDims {
        app: 16,
        ang: 12,
        mag: 12,
        bkg: 1,
    };
    for i in 0..1000 {
        let z = Normalizers {
            app: rng.gen_range(0.1..3.0),
            ang: rng.gen_range(0.1..3.0),
            mag: rng.gen_range(0.1..3.0),
            bkg: rng.gen_range(0.1..3.0),
        };
        let (a, b, c) = (
            random_feature(&mut rng, &dims),
            random_feature(&mut rng, &dims),
            random_feature(&mut rng, &dims),
        );
        let d = |x: &FeatureVector, y: &FeatureVector| feature_distance(x, y, &z).unwrap();
        check!(d(&a, &a) == 0.0, "triple {i}: d(a,a) = {}", d(&a, &a));
        check!((d(&a, &b) - d(&b, &a)).abs() <= 1e-9, "triple {i}: asymmetric");
        check!(
            d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9,
            "triple {i}: triangle inequality fails"
        );
    }
    Ok("identity, symmetry and triangle inequality on 1000 random triples".into())
}

fn min_pairwise(rm: &RegionModel, z: &Normalizers) -> f64 {
    let ex = rm.exemplars();
    let mut best = f64::INFINITY;
    for i in 0..ex.len() {
        for j in i + 1..ex.len() {
            best = best.min(feature_distance(&ex[i], &ex[j], z).unwrap());
        }
    }
    best
}

fn exemplar_criterion() -> Outcome {
    let t = 10;
    let nominal = scene_features(&lane_scene(200, 1, 0, None), t);
    let grid = scene_grid();
    let th_list = [0.25f32, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
    let seed = NormalizerChoice::Calibrate { seed: 0 };

    // separation and monotone exemplar count on the synthetic nominal video
    let mut counts = Vec::new();
    for &th in &th_list {
        let m = build_scene_model(std::slice::from_ref(&nominal), builtin_spec(grid.clone(), t, th), seed).unwrap();
        for rm in &m.regions {
            let sep = min_pairwise(rm, &m.normalizers);
            check!(
                sep > th as f64,
                "th {th}: region {} has exemplars {sep} apart",
                rm.region_index
            );
        }
        counts.push(m.exemplar_count());
    }

    // the same on a richer random stream
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dims = ComponentDims {
        app: 6,
        ang: 12,
        mag: 12,
        bkg: 1,
    };
    let small_grid = build_region_grid((16, 16), (16, 16)).unwrap();
    let random_video = |rng: &mut ChaCha8Rng, frames: u64| -> Vec<KeyedFeature> {
        (0..frames)
            .flat_map(|s| (0..small_grid.len()).map(move |r| (r, s)))
            .map(|(r, s)| KeyedFeature {
                key: vad_core::attributes::VolumeKey::new(r, s as usize * 10),
                feature: random_feature(rng, &dims),
            })
            .collect()
    };
    let stream = random_video(&mut rng, 120);
    let spec = |th: f32| ModelSpec {
        grid: small_grid.clone(),
        t: 10,
        th,
        dims,
        source: FeatureSource::Imported,
        flow_thresholds: FlowThresholds::default(),
    };
    let mut random_counts = Vec::new();
    for &th in &th_list {
        let m = build_scene_model(std::slice::from_ref(&stream), spec(th), seed).unwrap();
        for rm in &m.regions {
            check!(
                min_pairwise(rm, &m.normalizers) > th as f64,
                "random stream, th {th}: separation violated"
            );
        }
        random_counts.push(m.exemplar_count());
    }
    for (name, c) in [("synthetic scene", &counts), ("random stream", &random_counts)] {
        check!(
            c.windows(2).all(|p| p[1] <= p[0]),
            "{name}: exemplar counts {c:?} not monotone in th"
        );
    }

    // incremental update equals a single build over the concatenation (fixed normalizers)
    let z = Normalizers {
        app: 1.3,
        ang: 0.4,
        mag: 2.5,
        bkg: 0.9,
    };
    for split in 0..20 {
        let (na, nb) = (rng.gen_range(1..40), rng.gen_range(1..40));
        let a = random_video(&mut rng, na);
        let b = random_video(&mut rng, nb);
        let mut incremental =
            build_scene_model(std::slice::from_ref(&a), spec(1.5), NormalizerChoice::Fixed(z)).unwrap();
        update_scene_model(&mut incremental, &b).unwrap();
        let mut joint = a.clone();
        joint.extend(b.iter().cloned());
        let batch = build_scene_model(&[joint], spec(1.5), NormalizerChoice::Fixed(z)).unwrap();
        let same = incremental
            .regions
            .iter()
            .zip(&batch.regions)
            .all(|(x, y)| x.exemplars() == y.exemplars());
        check!(same, "split {split}: update(build(A), B) differs from build(A+B)");
    }
    Ok(format!(
        "separation > th everywhere; counts over th {th_list:?}: scene {counts:?}, random {random_counts:?}; 20 update splits equal"
    ))
}

fn end_to_end_criterion() -> Outcome {
    let started = Instant::now();
    let t = 10;
    let grid = scene_grid();
    let nominal = scene_features(&lane_scene(200, 1, 0, None), t);
    let model = build_scene_model(
        &[nominal],
        builtin_spec(grid.clone(), t, 1.5),
        NormalizerChoice::Calibrate { seed: 0 },
    )
    .unwrap();
    let opts = DetectOptions {
        skip_unchanged: false,
        ..DetectOptions::default()
    };
    let threshold = 1.8;

    // (a) same motion, phase-shifted
    let same = detect(&lane_scene(60, 1, 6, None), &model, &opts).unwrap();
    let worst = same.volume_scores.iter().map(|v| v.score).fold(0.0, f64::max);
    check!(
        worst < threshold,
        "(a) nominal-like test video has a volume scoring {worst:.3}"
    );

    // (b) leftward motion in the lane
    let lane_regions: Vec<usize> = (0..grid.len())
        .filter(|&r| {
            let (_, y0, _, y1) = grid.clipped_bounds(r);
            y0 < LANE_ROWS.end && LANE_ROWS.start < y1
        })
        .collect();
    let left = detect(&lane_scene(60, -1, 0, None), &model, &opts).unwrap();
    let lane_min = left
        .volume_scores
        .iter()
        .filter(|v| lane_regions.contains(&v.region_index))
        .map(|v| v.score)
        .fold(f64::INFINITY, f64::min);
    check!(
        lane_min > threshold,
        "(b) a leftward lane volume scores only {lane_min:.3}"
    );

    // (c) an object moving through the static bottom area
    let intruder = Intruder { x0: 10, y0: 50 };
    let frames = 40;
    let moved = detect(&lane_scene(frames, 1, 0, Some(intruder)), &model, &opts).unwrap();
    let mut intruder_min = f64::INFINITY;
    for vs in &moved.volume_scores {
        let mid = vs.frame_start + t / 2;
        let (cx, cy) = (intruder.x_at(mid) + INTRUDER / 2, intruder.y0 + INTRUDER / 2);
        let (x0, y0, x1, y1) = grid.clipped_bounds(vs.region_index);
        if (x0..x1).contains(&cx) && (y0..y1).contains(&cy) {
            check!(
                vs.score == opts.sentinel || vs.score > threshold,
                "(c) region {} window {} scores {:.3}",
                vs.region_index,
                vs.frame_start,
                vs.score
            );
            intruder_min = intruder_min.min(vs.score);
        }
    }
    check!(intruder_min.is_finite(), "(c) no volume contained the moving object");
    let secs = started.elapsed().as_secs_f64();
    check!(secs < 30.0, "took {secs:.1} s");
    Ok(format!(
        "(a) max {worst:.3} < 1.8; (b) lane min {lane_min:.3} > 1.8; (c) object min {intruder_min:.3} > 1.8 ({secs:.1} s)"
    ))
}

fn score_map_criterion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    // 8x24 frame with 16x16 regions: anchors at x = 0, 8, 16 and one row
    let grid = build_region_grid((8, 24), (16, 16)).unwrap();
    check!(grid.len() == 3, "toy grid has {} regions", grid.len());
    let (t, windows) = (4, 3);
    let mut volumes = Vec::new();
    for w in 0..windows {
        for r in 0..3 {
            volumes.push(VolumeScore {
                region_index: r,
                frame_start: w * t,
                score: rng.gen_range(0.0..5.0f32) as f64,
                nearest_exemplar: Some(0),
            });
        }
    }
    let mut map = ScoreMap::new(windows * t, 8, 24);
    for v in &volumes {
        accumulate(&mut map, v, &grid, t);
    }
    for k in 0..windows * t {
        for y in 0..8 {
            for x in 0..24 {
                let want = volumes
                    .iter()
                    .filter(|v| {
                        let a = grid.anchor(v.region_index);
                        (v.frame_start..v.frame_start + t).contains(&k)
                            && (a.x0..a.x0 + 16).contains(&x)
                            && (a.y0..a.y0 + 16).contains(&y)
                    })
                    .map(|v| v.score as f32)
                    .fold(f32::NEG_INFINITY, f32::max);
                check!(
                    map.get(k, y, x) == want,
                    "pixel ({k},{y},{x}) = {} but brute force says {want}",
                    map.get(k, y, x)
                );
            }
        }
    }
    for _ in 0..20 {
        volumes.shuffle(&mut rng);
        let mut other = ScoreMap::new(windows * t, 8, 24);
        for v in &volumes {
            accumulate(&mut other, v, &grid, t);
        }
        check!(other == map, "accumulation order changed the map");
    }
    Ok("3-region toy grid matches brute-force max; 20 shuffled orders agree".into())
}

/// Video whose frames repeat with period t, so every window equals the previous one.
fn periodic_scene(frames: usize, t: usize) -> VideoInput {
    let period = 2 * t;
    let images = (0..frames)
        .map(|i| {
            RgbImage::from_fn(SIDE as u32, SIDE as u32, |x, y| {
                let (x, y) = (x as usize, y as usize);
                if LANE_ROWS.contains(&y) && (x + period * 4 - 2 * (i % t)) % period < t {
                    Rgb([220, 40, 40])
                } else {
                    background(x, y)
                }
            })
        })
        .collect();
    let flows = (0..frames - 1)
        .map(|i| {
            FlowField::from_fn(SIDE, SIDE, |x, y| {
                if LANE_ROWS.contains(&y) && (x + period * 4 - 2 * (i % t)) % period < t {
                    (2.0, 0.0)
                } else {
                    (0.0, 0.0)
                }
            })
        })
        .collect();
    VideoInput::new(FrameSequence::new(images, 30.0).unwrap(), flows).unwrap()
}

fn skip_criterion() -> Outcome {
    let t = 10;
    let grid = scene_grid();
    let nominal = scene_features(&lane_scene(100, 1, 0, None), t);
    let model = build_scene_model(
        &[nominal],
        builtin_spec(grid, t, 1.5),
        NormalizerChoice::Calibrate { seed: 0 },
    )
    .unwrap();
    let video = periodic_scene(80, t);
    let on = detect(&video, &model, &DetectOptions::default()).unwrap();
    let off = detect(
        &video,
        &model,
        &DetectOptions {
            skip_unchanged: false,
            ..DetectOptions::default()
        },
    )
    .unwrap();
    let bits = |m: &ScoreMap| m.raw().iter().map(|s| s.to_bits()).collect::<Vec<_>>();
    check!(bits(&on.map) == bits(&off.map), "skip on/off maps differ");
    check!(
        off.feature_computations >= 2 * on.feature_computations,
        "skip computed {} features vs {} without",
        on.feature_computations,
        off.feature_computations
    );
    Ok(format!(
        "maps bit-identical; feature computations {} with skip vs {} without",
        on.feature_computations, off.feature_computations
    ))
}

// --- evaluation oracles -----------------------------------------------------

struct Instance {
    frames: usize,
    h: usize,
    w: usize,
    map: ScoreMap,
    tracks: Vec<Vec<(usize, PixelBox)>>,
}

fn oracle_components(mask: &[bool], w: usize, h: usize) -> Vec<Vec<usize>> {
    // union-find over 8-neighbours
    let mut parent: Vec<usize> = (0..mask.len()).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !mask[i] {
                continue;
            }
            for (dx, dy) in [(1i64, 0i64), (-1, 1), (0, 1), (1, 1)] {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx >= 0 && (nx as usize) < w && (ny as usize) < h && mask[ny as usize * w + nx as usize] {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, ny as usize * w + nx as usize));
                    parent[a] = b;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &on) in mask.iter().enumerate() {
        if on {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
    }
    groups.into_values().collect()
}

fn oracle_trapezoid(mut pts: Vec<(f64, f64)>) -> f64 {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut prev = (0.0, 0.0);
    let mut area = 0.0;
    for (x, y) in pts {
        if x >= 1.0 {
            let y1 = prev.1 + (y - prev.1) * (1.0 - prev.0) / (x - prev.0);
            return area + (1.0 - prev.0) * (prev.1 + y1) / 2.0;
        }
        area += (x - prev.0) * (prev.1 + y) / 2.0;
        prev = (x, y);
    }
    area + (1.0 - prev.0) * prev.1
}

/// Exhaustive reference for (RBDC, TBDC) at every distinct positive score.
fn oracle_criteria(inst: &Instance, params: &CriterionParams) -> (f64, f64) {
    let mut taus: Vec<f32> = inst.map.raw().iter().copied().filter(|&s| s > 0.0).collect();
    taus.sort_by(|a, b| b.total_cmp(a));
    taus.dedup();
    let n_boxes: usize = inst.tracks.iter().map(Vec::len).sum();
    let (mut rb, mut tb) = (Vec::new(), Vec::new());
    for tau in taus {
        let mut hit: Vec<Vec<bool>> = inst.tracks.iter().map(|t| vec![false; t.len()]).collect();
        let mut fp = 0usize;
        for k in 0..inst.frames {
            let mask: Vec<bool> = inst.map.frame(k).iter().map(|&s| s >= tau).collect();
            for comp in oracle_components(&mask, inst.w, inst.h) {
                let mut matched = false;
                for (ti, track) in inst.tracks.iter().enumerate() {
                    for (bi, (f, b)) in track.iter().enumerate() {
                        if *f != k {
                            continue;
                        }
                        let inter = comp.iter().filter(|&&p| b.contains(p % inst.w, p / inst.w)).count();
                        let iou = inter as f64 / (comp.len() + b.w * b.h - inter) as f64;
                        if iou >= params.iou_min {
                            hit[ti][bi] = true;
                            matched = true;
                        }
                    }
                }
                if !matched {
                    fp += 1;
                }
            }
        }
        let fppf = fp as f64 / inst.frames as f64;
        let boxes_hit = hit.iter().flatten().filter(|&&h| h).count();
        rb.push((fppf, boxes_hit as f64 / n_boxes as f64));
        let tracks_hit = hit
            .iter()
            .filter(|h| h.iter().filter(|&&x| x).count() as f64 >= params.track_fraction * h.len() as f64 - 1e-9)
            .count();
        tb.push((fppf, tracks_hit as f64 / inst.tracks.len() as f64));
    }
    (oracle_trapezoid(rb), oracle_trapezoid(tb))
}

fn oracle_frame_auc(scores: &[f64], labels: &[bool]) -> f64 {
    // probability a positive outranks a negative, ties count half
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                wins += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let (frames, h, w) = (rng.gen_range(1..=20), rng.gen_range(4..=10), rng.gen_range(4..=10));
    let levels = [0.0f32, 0.5, 1.0, 2.0, 3.0];
    let mut raw = vec![0.0f32; frames * h * w];
    for k in 0..frames {
        for _ in 0..rng.gen_range(0..4) {
            let (bw, bh) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
            let (x0, y0) = (rng.gen_range(0..=w - bw), rng.gen_range(0..=h - bh));
            let s = levels[rng.gen_range(1..levels.len())];
            for y in y0..y0 + bh {
                for x in x0..x0 + bw {
                    raw[(k * h + y) * w + x] = s;
                }
            }
        }
        if rng.gen_bool(0.2) {
            let i = rng.gen_range(0..h * w);
            raw[k * h * w + i] = levels[rng.gen_range(0..levels.len())];
        }
    }
    let mut tracks = Vec::new();
    for _ in 0..rng.gen_range(1..=3) {
        let mut boxes = Vec::new();
        let start = rng.gen_range(0..frames);
        for f in start..frames.min(start + rng.gen_range(1..=6)) {
            let (bw, bh) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
            boxes.push((
                f,
                PixelBox {
                    x: rng.gen_range(0..=w - bw),
                    y: rng.gen_range(0..=h - bh),
                    w: bw,
                    h: bh,
                },
            ));
        }
        tracks.push(boxes);
    }
    Instance {
        frames,
        h,
        w,
        map: ScoreMap::from_raw(frames, h, w, raw).unwrap(),
        tracks,
    }
}

fn ground_truth(inst: &Instance) -> GroundTruth {
    let rows = inst.tracks.iter().enumerate().flat_map(|(id, t)| {
        t.iter()
            .map(move |(f, b)| (id as u64, *f, b.x as f64, b.y as f64, b.w as f64, b.h as f64))
    });
    GroundTruth::from_rows(rows, (inst.h, inst.w), inst.frames).unwrap()
}

fn run_criteria(inst: &Instance, params: &CriterionParams) -> (f64, f64) {
    let gt = ground_truth(inst);
    let dets = extract_detections(&inst.map, &threshold_sweep(&inst.map, 1000));
    let r = rbdc_auc(&dets, &gt, inst.frames, inst.w, params).unwrap();
    let t = tbdc_auc(&dets, &gt, inst.frames, inst.w, params).unwrap();
    (r.auc, t.auc)
}

fn metric_oracle_criterion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params = CriterionParams::default();
    for case in 0..300 {
        let inst = random_instance(&mut rng);
        let got = run_criteria(&inst, &params);
        let want = oracle_criteria(&inst, &params);
        check!(got == want, "instance {case}: (RBDC, TBDC) {got:?} vs oracle {want:?}");
        let labels = ground_truth(&inst).frame_labels(inst.frames);
        if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
            let scores = inst.map.frame_maxima();
            let got = frame_auc(&scores, &labels).unwrap();
            let want = oracle_frame_auc(&scores, &labels);
            // different summation orders; agreement to rounding
            check!(
                (got - want).abs() <= 1e-12,
                "instance {case}: frame AUC {got} vs pairwise oracle {want}"
            );
        }
    }

    // perfect detector: score exactly the ground-truth boxes
    let (frames, h, w) = (12, 10, 10);
    let tracks: Vec<Vec<(usize, PixelBox)>> = vec![
        (2..6).map(|f| (f, PixelBox { x: 1, y: 1, w: 3, h: 3 })).collect(),
        (5..9).map(|f| (f, PixelBox { x: 6, y: 5, w: 3, h: 4 })).collect(),
    ];
    let mut raw = vec![0.0f32; frames * h * w];
    for t in &tracks {
        for (f, b) in t {
            for y in b.y..b.y + b.h {
                for x in b.x..b.x + b.w {
                    raw[(f * h + y) * w + x] = 5.0;
                }
            }
        }
    }
    let perfect = Instance {
        frames,
        h,
        w,
        map: ScoreMap::from_raw(frames, h, w, raw).unwrap(),
        tracks,
    };
    let (r, t) = run_criteria(&perfect, &params);
    check!(r == 1.0 && t == 1.0, "perfect detector gives RBDC {r}, TBDC {t}");

    // track of 10 boxes with exactly one detected: counts at fraction 0.1, not at 0.2
    let frames = 10;
    let track: Vec<(usize, PixelBox)> = (0..frames).map(|f| (f, PixelBox { x: 2, y: 2, w: 2, h: 2 })).collect();
    let mut raw = vec![0.0f32; frames * 8 * 8];
    for y in 2..4 {
        for x in 2..4 {
            raw[(3 * 8 + y) * 8 + x] = 1.0;
        }
    }
    let boundary = Instance {
        frames,
        h: 8,
        w: 8,
        map: ScoreMap::from_raw(frames, 8, 8, raw).unwrap(),
        tracks: vec![track],
    };
    let (_, at_tenth) = run_criteria(&boundary, &params);
    let (_, at_fifth) = run_criteria(
        &boundary,
        &CriterionParams {
            track_fraction: 0.2,
            ..params
        },
    );
    check!(at_tenth == 1.0, "1 of 10 boxes at fraction 0.1 gives TBDC {at_tenth}");
    check!(at_fifth == 0.0, "1 of 10 boxes at fraction 0.2 gives TBDC {at_fifth}");
    Ok("300 random instances match exhaustive oracles; perfect detector 1.0; TBDC boundary inclusive".into())
}

fn explanation_criterion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dims = ComponentDims::builtin(8);
    for case in 0..200 {
        let z = Normalizers {
            app: rng.gen_range(0.1..2.0),
            ang: rng.gen_range(0.1..2.0),
            mag: rng.gen_range(0.1..2.0),
            bkg: rng.gen_range(0.1..2.0),
        };
        let mut rm = RegionModel::new(0);
        for i in 0..rng.gen_range(1..6) {
            rm.offer(
                random_feature(&mut rng, &dims),
                Provenance {
                    video: 0,
                    frame_start: i,
                },
                -1.0,
                &z,
            );
        }
        let f = random_feature(&mut rng, &dims);
        let e = explain_score(&f, &rm, &z, None, &ExplainOptions::default()).unwrap();
        let sum: f64 = e.terms.iter().map(|t| t.value).sum();
        check!(
            (sum - e.total).abs() <= 1e-6,
            "case {case}: terms sum to {sum}, total {}",
            e.total
        );
        check!(
            (e.verdict == Verdict::Anomalous) == (e.total > 1.8),
            "case {case}: verdict inconsistent"
        );
    }

    // features whose nearest-exemplar distance is exactly the reported score
    let exemplar = FeatureVector::new(vec![0.0], vec![0.0; 12], vec![0.0; 12], vec![0.0], false).unwrap();
    let mut rm = RegionModel::new(0);
    rm.offer(
        exemplar,
        Provenance {
            video: 0,
            frame_start: 0,
        },
        -1.0,
        &Normalizers::default(),
    );
    let mut verdicts = Vec::new();
    for score in [2.08f32, 1.59] {
        let f = FeatureVector::new(vec![score], vec![0.0; 12], vec![0.0; 12], vec![0.0], false).unwrap();
        let e = explain_score(&f, &rm, &Normalizers::default(), None, &ExplainOptions::default()).unwrap();
        check!(
            (e.total - score as f64).abs() < 1e-6,
            "score {score} explained as {}",
            e.total
        );
        verdicts.push(e.verdict);
    }
    check!(
        verdicts == [Verdict::Anomalous, Verdict::Normal],
        "verdicts {verdicts:?}"
    );
    check!(
        verdict(2.08, 1.8) == Verdict::Anomalous && verdict(1.59, 1.8) == Verdict::Normal,
        "verdict rule"
    );
    Ok("addends sum to total on 200 cases; 2.08 anomalous, 1.59 normal at 1.8".into())
}

fn write_scene(dir: &Path, video: &VideoInput) {
    write_frame_sequence(&video.frames, &dir.join("frames")).unwrap();
    write_flow_dir(&video.flows, &dir.join("flow")).unwrap();
}

fn reproducibility_criterion() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_scene(tmp.path(), &lane_scene(60, 1, 0, None));
    let config = tmp.path().join("config.toml");
    std::fs::write(
        &config,
        "[geometry]\nregion_size = 32\nt = 10\n\n[model]\nth = 1.5\ncalibration_seed = 7\n",
    )
    .map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for (run, workers) in [("a", "1"), ("b", "4")] {
        let out = tmp.path().join(format!("model_{run}.evm"));
        let status = Command::new(env!("CARGO_BIN_EXE_vad"))
            .arg("build")
            .arg("--config")
            .arg(&config)
            .args(["--workers", workers])
            .arg("--frames")
            .arg(tmp.path().join("frames"))
            .arg("--flow")
            .arg(tmp.path().join("flow"))
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        check!(
            status.status.success(),
            "build failed: {}",
            String::from_utf8_lossy(&status.stderr)
        );
        outputs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    check!(outputs[0] == outputs[1], "model files differ");
    Ok(format!(
        "two builds (1 and 4 workers) wrote identical {}-byte models",
        outputs[0].len()
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("motion-attribute oracle", motion_oracle_criterion),
        ("normalization and rotation", normalization_criterion),
        ("distance metric properties", metric_criterion),
        ("exemplar guarantees", exemplar_criterion),
        ("end-to-end synthetic scene", end_to_end_criterion),
        ("score-map max rule", score_map_criterion),
        ("skip soundness and speed", skip_criterion),
        ("evaluation metric oracles", metric_oracle_criterion),
        ("explanation fidelity", explanation_criterion),
        ("build reproducibility", reproducibility_criterion),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
