use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use log::info;
use serde::{Deserialize, Serialize};
use vad_core::attributes::{import_features, FeatureSource, FlowThresholds, VolumeKey, BUILTIN_APP_DIM};
use vad_core::evaluate::{evaluate_score_map, parse_ground_truth_csv, MetricsReport};
use vad_core::explain::{
    explain_score, render_panel_png, render_region_summary, AttributeHead, ExplainOptions, Explanation, RegionSummary,
};
use vad_core::extract::{builtin_volume_feature, extract_video_features, imported_feature, table_features, VideoInput};
use vad_core::features::{calibrate_normalizers, ComponentDims, FeatureVector, Normalizers};
use vad_core::ingest::{build_region_grid, load_flow_dir, load_frame_sequence, RegionGrid, VideoVolume};
use vad_core::model::{
    build_scene_model, load_model, save_model, update_scene_model, KeyedFeature, ModelSpec, NormalizerChoice,
    SceneModel,
};
use vad_core::scoring::{detect, detect_features, write_heatmaps, write_score_maps, Detection, VolumeScore};

use crate::cli::{
    BuildArgs, CalibrateArgs, DetectArgs, EvalArgs, ExplainArgs, GeometryArgs, InputArgs, ScoringArgs, UpdateArgs,
};
use crate::config::{Config, FlowSource};

fn apply_input(cfg: &mut Config, input: &InputArgs) {
    if let Some(s) = input.flow_source {
        cfg.flow.source = s.into();
    }
}

fn apply_geometry(cfg: &mut Config, g: &GeometryArgs) {
    let geo = &mut cfg.geometry;
    geo.region_size = g.region_size.unwrap_or(geo.region_size);
    geo.t = g.t.unwrap_or(geo.t);
    geo.frame_width = g.frame_width.or(geo.frame_width);
    geo.frame_height = g.frame_height.or(geo.frame_height);
}

fn apply_scoring(cfg: &mut Config, s: &ScoringArgs) {
    if s.no_skip {
        cfg.scoring.skip_unchanged = false;
    } else if s.skip {
        cfg.scoring.skip_unchanged = true;
    }
    let sc = &mut cfg.scoring;
    sc.ncc_min = s.ncc_min.unwrap_or(sc.ncc_min);
    sc.sentinel = s.sentinel.unwrap_or(sc.sentinel);
    sc.decision_threshold = s.threshold.unwrap_or(sc.decision_threshold);
}

/// One nominal or test video, loaded lazily.
enum Source {
    Video { frames: PathBuf, flow: Option<PathBuf> },
    Features(PathBuf),
}

impl Source {
    fn describe(&self) -> String {
        match self {
            Source::Video { frames, .. } => frames.display().to_string(),
            Source::Features(p) => p.display().to_string(),
        }
    }
}

fn sources(input: &InputArgs) -> Result<Vec<Source>> {
    if !input.features.is_empty() {
        return Ok(input.features.iter().cloned().map(Source::Features).collect());
    }
    ensure!(
        !input.frames.is_empty(),
        "no input: give --frames DIR (with --flow DIR) or --features FILE"
    );
    ensure!(
        input.flow.is_empty() || input.flow.len() == input.frames.len(),
        "{} --frames directories but {} --flow directories",
        input.frames.len(),
        input.flow.len()
    );
    Ok(input
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| Source::Video {
            frames: f.clone(),
            flow: input.flow.get(i).cloned(),
        })
        .collect())
}

fn load_video(frames: &Path, flow: Option<&Path>, cfg: &Config) -> Result<VideoInput> {
    let seq = load_frame_sequence(frames)?;
    let video = match (cfg.flow.source, flow) {
        (FlowSource::Estimate, _) | (FlowSource::Auto, None) => {
            info!("estimating flow for {} ({} frames)", frames.display(), seq.len());
            VideoInput::with_estimated_flow(seq, &cfg.flow.estimator)?
        }
        (FlowSource::Import | FlowSource::Auto, Some(dir)) => VideoInput::new(seq, load_flow_dir(dir)?)?,
        (FlowSource::Import, None) => bail!("flow source is 'import' but no --flow directory was given"),
    };
    Ok(video)
}

fn feature_grid(cfg: &Config) -> Result<RegionGrid> {
    let g = &cfg.geometry;
    match (g.frame_height, g.frame_width) {
        (Some(h), Some(w)) => Ok(build_region_grid((h, w), (g.region_size, g.region_size))?),
        _ => bail!("feature-file inputs need the frame size: set --frame-width and --frame-height"),
    }
}

struct Extracted {
    grid: RegionGrid,
    dims: ComponentDims,
    source: FeatureSource,
    videos: Vec<Vec<KeyedFeature>>,
}

/// Features of every input, in order. `grid` fixes geometry; otherwise it comes from the first input.
fn extract_all(
    srcs: &[Source],
    cfg: &Config,
    grid: Option<RegionGrid>,
    t: usize,
    flow_th: &FlowThresholds,
) -> Result<Extracted> {
    let mut grid = grid;
    let mut dims = None;
    let mut source = None;
    let mut videos = Vec::new();
    for src in srcs {
        let (features, d, s) = match src {
            Source::Video { frames, flow } => {
                let video = load_video(frames, flow.as_deref(), cfg)?;
                let g = match &grid {
                    Some(g) => g.clone(),
                    None => build_region_grid(
                        video.frames.dims(),
                        (cfg.geometry.region_size, cfg.geometry.region_size),
                    )?,
                };
                let fs = extract_video_features(&video, &g, t, flow_th)?;
                grid = Some(g);
                (fs, ComponentDims::builtin(BUILTIN_APP_DIM), FeatureSource::Builtin)
            }
            Source::Features(path) => {
                let table = import_features(path)?;
                let g = match &grid {
                    Some(g) => g.clone(),
                    None => feature_grid(cfg)?,
                };
                let fs = table_features(&table, &g)?;
                grid = Some(g);
                (fs, table.dims, FeatureSource::Imported)
            }
        };
        if let Some(prev) = dims {
            ensure!(
                prev == d,
                "{} has feature dims {d:?}, earlier inputs have {prev:?}",
                src.describe()
            );
        }
        if let Some(prev) = source {
            ensure!(prev == s, "cannot mix built-in and imported features");
        }
        info!("{}: {} volumes", src.describe(), features.len());
        dims = Some(d);
        source = Some(s);
        videos.push(features);
    }
    Ok(Extracted {
        grid: grid.ok_or_else(|| anyhow!("no input"))?,
        dims: dims.ok_or_else(|| anyhow!("no input"))?,
        source: source.ok_or_else(|| anyhow!("no input"))?,
        videos,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NormalizersFile {
    #[serde(flatten)]
    pub normalizers: Normalizers,
    #[serde(default)]
    pub config: String,
}

pub fn load_normalizers(path: &Path) -> Result<Normalizers> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let file: NormalizersFile =
        serde_json::from_str(&text).with_context(|| format!("invalid normalizers file {}", path.display()))?;
    file.normalizers.validate()?;
    Ok(file.normalizers)
}

pub fn calibrate(mut cfg: Config, args: &CalibrateArgs) -> Result<()> {
    apply_input(&mut cfg, &args.input);
    apply_geometry(&mut cfg, &args.geometry);
    cfg.model.calibration_seed = args.seed.unwrap_or(cfg.model.calibration_seed);
    cfg.validate()?;
    let srcs = sources(&args.input)?;
    let ex = extract_all(&srcs, &cfg, None, cfg.geometry.t, &cfg.flow.thresholds())?;
    let all: Vec<FeatureVector> = ex.videos.into_iter().flatten().map(|kf| kf.feature).collect();
    ensure!(
        !all.is_empty(),
        "no complete video volumes in the input; nothing to calibrate on"
    );
    let z = calibrate_normalizers(&all, cfg.model.calibration_seed)?;
    write_json(
        &args.out,
        &NormalizersFile {
            normalizers: z,
            config: cfg.echo(),
        },
    )?;
    println!(
        "normalizers from {} features: app {} ang {} mag {} bkg {}",
        all.len(),
        z.app,
        z.ang,
        z.mag,
        z.bkg
    );
    Ok(())
}

fn percentile(sorted: &[usize], q: f64) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    sorted[((sorted.len() - 1) as f64 * q).round() as usize]
}

fn print_model_summary(model: &SceneModel) {
    let mut counts: Vec<usize> = model.regions.iter().map(|r| r.len()).collect();
    let occupied = counts.iter().filter(|&&c| c > 0).count();
    counts.sort_unstable();
    println!(
        "regions: {} ({} with exemplars), exemplars: {}, per region min/median/p90/max: {}/{}/{}/{}",
        model.regions.len(),
        occupied,
        model.exemplar_count(),
        percentile(&counts, 0.0),
        percentile(&counts, 0.5),
        percentile(&counts, 0.9),
        percentile(&counts, 1.0)
    );
    let z = model.normalizers;
    println!("normalizers: app {} ang {} mag {} bkg {}", z.app, z.ang, z.mag, z.bkg);
}

pub fn build(mut cfg: Config, args: &BuildArgs) -> Result<()> {
    apply_input(&mut cfg, &args.input);
    apply_geometry(&mut cfg, &args.geometry);
    cfg.model.th = args.th.unwrap_or(cfg.model.th);
    cfg.model.calibration_seed = args.seed.unwrap_or(cfg.model.calibration_seed);
    cfg.validate()?;
    let srcs = sources(&args.input)?;
    let flow_th = cfg.flow.thresholds();
    let ex = extract_all(&srcs, &cfg, None, cfg.geometry.t, &flow_th)?;
    let choice = match &args.normalizers {
        Some(p) => NormalizerChoice::Fixed(load_normalizers(p)?),
        None => NormalizerChoice::Calibrate {
            seed: cfg.model.calibration_seed,
        },
    };
    let spec = ModelSpec {
        grid: ex.grid,
        t: cfg.geometry.t,
        th: cfg.model.th,
        dims: ex.dims,
        source: ex.source,
        flow_thresholds: flow_th,
    };
    let mut model = build_scene_model(&ex.videos, spec, choice)?;
    model.config = cfg.echo();
    save_model(&model, &args.out)?;
    print_model_summary(&model);
    Ok(())
}

pub fn update(mut cfg: Config, args: &UpdateArgs) -> Result<()> {
    apply_input(&mut cfg, &args.input);
    let mut model = load_model(&args.model)?;
    let srcs = sources(&args.input)?;
    let ex = extract_all(&srcs, &cfg, Some(model.grid.clone()), model.t, &model.flow_thresholds)?;
    ensure!(
        ex.source == model.source,
        "model was built from {:?} features, update input is {:?}",
        model.source,
        ex.source
    );
    for v in &ex.videos {
        update_scene_model(&mut model, v)?;
    }
    let out = args.out.as_ref().unwrap_or(&args.model);
    save_model(&model, out)?;
    print_model_summary(&model);
    Ok(())
}

#[derive(Debug, Serialize)]
struct VolumeScoresFile<'a> {
    config: String,
    decision_threshold: f64,
    feature_computations: usize,
    reused: usize,
    volumes: &'a [VolumeScore],
}

fn single_source(input: &InputArgs) -> Result<Source> {
    let mut srcs = sources(input)?;
    ensure!(srcs.len() == 1, "expected exactly one test video, got {}", srcs.len());
    Ok(srcs.remove(0))
}

fn run_detection(cfg: &Config, model: &SceneModel, src: &Source, frame_count: Option<usize>) -> Result<Detection> {
    let opts = cfg.scoring.detect_options();
    match src {
        Source::Video { frames, flow } => {
            ensure!(
                model.source == FeatureSource::Builtin,
                "model uses imported features; pass --features"
            );
            let video = load_video(frames, flow.as_deref(), cfg)?;
            Ok(detect(&video, model, &opts)?)
        }
        Source::Features(path) => {
            let table = import_features(path)?;
            let features = table_features(&table, &model.grid)?;
            let frames = match frame_count {
                Some(n) => n,
                None => features
                    .iter()
                    .map(|kf| kf.key.frame_start as usize + model.t)
                    .max()
                    .unwrap_or(0),
            };
            Ok(detect_features(&features, frames, model, &opts)?)
        }
    }
}

pub fn detect_cmd(mut cfg: Config, args: &DetectArgs) -> Result<()> {
    apply_input(&mut cfg, &args.input);
    apply_scoring(&mut cfg, &args.scoring);
    cfg.validate()?;
    let model = load_model(&args.model)?;
    let src = single_source(&args.input)?;
    let det = run_detection(&cfg, &model, &src, args.frame_count)?;
    let echo = cfg.echo();
    write_score_maps(&det.map, &args.out, &echo)?;
    write_json(
        &args.out.join("volume_scores.json"),
        &VolumeScoresFile {
            config: echo,
            decision_threshold: cfg.scoring.decision_threshold,
            feature_computations: det.feature_computations,
            reused: det.reused,
            volumes: &det.volume_scores,
        },
    )?;
    let max = det.volume_scores.iter().map(|v| v.score).fold(0.0, f64::max);
    if args.heatmaps {
        let scale = if cfg.scoring.heatmap_scale > 0.0 {
            cfg.scoring.heatmap_scale
        } else if max > 0.0 {
            max
        } else {
            1.0
        };
        write_heatmaps(&det.map, &args.out, scale)?;
    }
    let flagged = det
        .volume_scores
        .iter()
        .filter(|v| v.score > cfg.scoring.decision_threshold)
        .count();
    println!(
        "frames: {}, volumes: {} ({} computed, {} reused), max score: {:.4}, above {}: {}",
        det.map.frames(),
        det.volume_scores.len(),
        det.feature_computations,
        det.reused,
        max,
        cfg.scoring.decision_threshold,
        flagged
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalFile {
    config: String,
    #[serde(flatten)]
    report: MetricsReport,
}

pub fn eval(mut cfg: Config, args: &EvalArgs) -> Result<()> {
    let e = &mut cfg.eval;
    e.iou_min = args.iou_min.unwrap_or(e.iou_min);
    e.track_fraction = args.track_fraction.unwrap_or(e.track_fraction);
    e.max_thresholds = args.max_thresholds.unwrap_or(e.max_thresholds);
    cfg.validate()?;
    let map = vad_core::scoring::read_score_maps(&args.scores)?;
    let text =
        fs::read_to_string(&args.gt).with_context(|| format!("cannot read ground truth {}", args.gt.display()))?;
    let gt = parse_ground_truth_csv(&text, (map.height(), map.width()), map.frames())
        .with_context(|| format!("ground truth {}", args.gt.display()))?;
    let report = evaluate_score_map(&map, &gt, &cfg.eval.params(), cfg.eval.max_thresholds)?;
    println!(
        "RBDC AUC: {:.6}\nTBDC AUC: {:.6}\nframe AUC: {}",
        report.rbdc.auc,
        report.tbdc.auc,
        report
            .frame_auc
            .map_or_else(|| "n/a (single-class labels)".into(), |a| format!("{a:.6}"))
    );
    if let Some(out) = &args.out {
        write_json(
            out,
            &EvalFile {
                config: cfg.echo(),
                report,
            },
        )?;
    }
    Ok(())
}

fn test_feature(cfg: &Config, model: &SceneModel, src: &Source, region: usize, frame: usize) -> Result<FeatureVector> {
    let start = frame / model.t * model.t;
    match src {
        Source::Video { frames, flow } => {
            ensure!(
                model.source == FeatureSource::Builtin,
                "model uses imported features; pass --features"
            );
            let video = load_video(frames, flow.as_deref(), cfg)?;
            ensure!(
                video.frames.dims() == model.grid.frame_dims(),
                "test frames are {:?}, model expects {:?}",
                video.frames.dims(),
                model.grid.frame_dims()
            );
            ensure!(
                start + model.t <= video.frames.len(),
                "frame {frame} is not inside a complete window of {} frames",
                model.t
            );
            let volume = VideoVolume::crop(&video.frames, &model.grid, region, start, model.t);
            Ok(builtin_volume_feature(
                &volume,
                &video.flows,
                &model.grid,
                &model.flow_thresholds,
            )?)
        }
        Source::Features(path) => {
            let table = import_features(path)?;
            let rec = table.records.get(&VolumeKey::new(region, start)).ok_or_else(|| {
                anyhow!(
                    "{} has no volume for region {region} starting at frame {start}",
                    path.display()
                )
            })?;
            Ok(imported_feature(rec, &table.dims)?)
        }
    }
}

#[derive(Debug, Serialize)]
struct ExplainFile<'a, T: Serialize> {
    config: String,
    #[serde(flatten)]
    body: &'a T,
}

fn save_png(img: &vad_core::image::RgbImage, path: &Path) -> Result<()> {
    img.save(path)
        .with_context(|| format!("cannot write {}", path.display()))
}

fn max_speed(panels: &[&vad_core::explain::AttributePanel]) -> f64 {
    panels.iter().flat_map(|p| p.speed.iter().copied()).fold(0.0, f64::max)
}

pub fn explain(mut cfg: Config, args: &ExplainArgs) -> Result<()> {
    apply_input(&mut cfg, &args.input);
    cfg.scoring.decision_threshold = args.threshold.unwrap_or(cfg.scoring.decision_threshold);
    cfg.scoring.sentinel = args.sentinel.unwrap_or(cfg.scoring.sentinel);
    let model = load_model(&args.model)?;
    let rm = model.region(args.region)?;
    let head = args.head.as_deref().map(AttributeHead::load).transpose()?;
    if let Some(dir) = &args.png_dir {
        fs::create_dir_all(dir)?;
    }

    if args.summary {
        let summary: RegionSummary = render_region_summary(rm, args.top_k, head.as_ref())?;
        if let Some(dir) = &args.png_dir {
            let panels: Vec<_> = summary.panels.iter().map(|(_, p)| p).collect();
            let scale = max_speed(&panels);
            for (i, p) in panels.iter().enumerate() {
                save_png(&render_panel_png(p, scale), &dir.join(format!("exemplar_{i:03}.png")))?;
            }
        }
        if args.json {
            println!(
                "{}",
                serde_json::to_string_pretty(&ExplainFile {
                    config: cfg.echo(),
                    body: &summary
                })?
            );
        } else {
            print!("{summary}");
        }
        return Ok(());
    }

    let frame = args
        .frame
        .ok_or_else(|| anyhow!("--frame is required to explain a test volume"))?;
    let src = single_source(&args.input)?;
    let f = test_feature(&cfg, &model, &src, args.region, frame)?;
    let opts = ExplainOptions {
        decision_threshold: cfg.scoring.decision_threshold,
        sentinel: cfg.scoring.sentinel,
    };
    let e: Explanation = explain_score(&f, rm, &model.normalizers, head.as_ref(), &opts)?;
    if let Some(dir) = &args.png_dir {
        let mut panels = vec![&e.test_panel];
        panels.extend(e.nearest_panel.as_ref());
        let scale = max_speed(&panels);
        save_png(&render_panel_png(&e.test_panel, scale), &dir.join("test_panel.png"))?;
        if let Some(p) = &e.nearest_panel {
            save_png(&render_panel_png(p, scale), &dir.join("nearest_panel.png"))?;
        }
    }
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&ExplainFile {
                config: cfg.echo(),
                body: &e
            })?
        );
    } else {
        print!("{e}");
    }
    Ok(())
}
