//! Command-line front end. `run` returns the process exit code: 0 on
//! success, 1 on runtime failures and 2 on usage errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::load_config;
use crate::error::{Error, Result};
use crate::eval::{best_box, overlap_curve, BestBoxMode};
use crate::extremal::{build_extremal_trees, extract_extremal};
use crate::image::{MultichannelImage, Rect, SegmentationMask};
use crate::pnm::{load_image, load_mask, save_mask, SequenceManifest};
use crate::scene::{generate, Background, SceneKind, SceneParams};
use crate::stability::extract_mshr;
use crate::tracker::{track_sequence, track_slices_3d, TrackerConfig};
use crate::tree::{build_component_tree, Norm, TreeParams};

#[derive(Parser, Debug)]
#[command(name = "mshr", version, about = "Maximally stable homogeneous region detection and tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Track regions through an image sequence.
    Track(TrackArgs),
    /// Track a region forwards and backwards through a slice stack.
    Slices3d(SlicesArgs),
    /// Detect stable regions in one image.
    ExtractMshr(ExtractArgs),
    /// Per-frame IoU between predicted and ground-truth masks.
    Eval(EvalArgs),
    /// Best axis-aligned box for each ground-truth mask.
    BestBox(BestBoxArgs),
    /// Write a deterministic synthetic sequence with ground truth.
    GenScene(GenSceneArgs),
    /// Time component-tree construction over image sizes and channel counts.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct TrackArgs {
    /// Sequence manifest (JSON list of frame files).
    #[arg(long)]
    seq: PathBuf,
    /// Init rectangle `r0,c0,h,w`; defaults to the manifest's `init`.
    #[arg(long, value_parser = parse_rect)]
    init: Option<Rect>,
    /// Tracker configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "masks")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SlicesArgs {
    /// Slice stack manifest.
    #[arg(long)]
    slices: PathBuf,
    /// Defaults to the manifest's `init_slice`, else 0.
    #[arg(long)]
    init_slice: Option<usize>,
    #[arg(long, value_parser = parse_rect)]
    init: Option<Rect>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "slices")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    /// Input image (PGM, PPM or channel manifest JSON).
    #[arg(long)]
    image: PathBuf,
    /// Restrict detection to `r0,c0,h,w`.
    #[arg(long, value_parser = parse_rect)]
    roi: Option<Rect>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    delta: Option<u32>,
    #[arg(long)]
    min_area: Option<u64>,
    #[arg(long)]
    max_area_fraction: Option<f64>,
    /// Divide the stability score by the region area.
    #[arg(long)]
    normalized: bool,
    #[arg(long, value_enum)]
    norm: Option<Norm>,
    #[arg(long)]
    bins: Option<u32>,
    /// Use per-channel dark/bright gray-level trees instead.
    #[arg(long)]
    extremal_baseline: bool,
    /// Write every tree node (id, parent, level, area, bbox) as JSON.
    #[arg(long)]
    dump_tree: Option<PathBuf>,
    #[arg(long, default_value = "mshr")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Directory of predicted masks (or a manifest).
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth masks (or a manifest with `gt`).
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value = "curve.dat")]
    out: PathBuf,
    /// Also write the JSON summary here.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BestBoxArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, value_enum, default_value = "exhaustive")]
    mode: BestBoxMode,
    #[arg(long, default_value = "bestbox.dat")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GenSceneArgs {
    #[arg(long, value_enum, default_value = "fig1-block")]
    kind: SceneKind,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    block_size: Option<usize>,
    #[arg(long)]
    max_shift: Option<i64>,
    #[arg(long)]
    max_rotation: Option<f64>,
    #[arg(long, value_enum)]
    background: Option<Background>,
    /// Repeat the first frame.
    #[arg(long = "static")]
    static_scene: bool,
    #[arg(long)]
    occlude_frame: Option<usize>,
    #[arg(long)]
    noise: Option<i32>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, default_value = "scene")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Square image sides.
    #[arg(long, value_delimiter = ',', default_values_t = [256usize, 512, 1024])]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 3])]
    channels: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_rect(s: &str) -> std::result::Result<Rect, String> {
    Rect::parse(s).map_err(|e| e.to_string())
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Track(a) => cmd_track(a),
        Command::Slices3d(a) => cmd_slices(a),
        Command::ExtractMshr(a) => cmd_extract(a),
        Command::Eval(a) => cmd_eval(a),
        Command::BestBox(a) => cmd_best_box(a),
        Command::GenScene(a) => cmd_gen_scene(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn config_or_default(path: &Option<PathBuf>) -> Result<TrackerConfig> {
    match path {
        Some(p) => load_config(p),
        None => Ok(TrackerConfig::default()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn load_sequence(manifest: &Path) -> Result<(SequenceManifest, Vec<MultichannelImage>)> {
    let (m, base) = SequenceManifest::load(manifest)?;
    let frames = m
        .frames
        .iter()
        .map(|f| load_image(base.join(f)))
        .collect::<Result<Vec<_>>>()?;
    if frames.is_empty() {
        return Err(Error::Manifest {
            path: manifest.to_path_buf(),
            reason: "no frames listed".into(),
        });
    }
    Ok((m, frames))
}

fn init_rect(given: Option<Rect>, manifest: &SequenceManifest) -> Result<Rect> {
    given
        .or_else(|| manifest.init.map(|[r, c, h, w]| Rect::new(r, c, h, w)))
        .ok_or_else(|| Error::InvalidParam("no --init given and the manifest has no init".into()))
}

fn union_masks(width: usize, height: usize, masks: impl IntoIterator<Item = SegmentationMask>) -> SegmentationMask {
    let mut out = SegmentationMask::new(width, height);
    for m in masks {
        for i in m.indices() {
            out.set(i / width, i % width, true);
        }
    }
    out
}

#[derive(Serialize)]
struct TargetReport {
    distance: f64,
    bbox: Option<Rect>,
    accepted: bool,
}

#[derive(Serialize)]
struct FrameReport {
    frame: usize,
    /// Smallest candidate distance over all targets.
    distance: f64,
    bbox: Option<Rect>,
    accepted: bool,
    millis: f64,
    targets: Vec<TargetReport>,
}

#[derive(Serialize)]
struct TrackReport {
    init: Rect,
    init_millis: f64,
    mean_millis: f64,
    median_millis: f64,
    frames: Vec<FrameReport>,
}

fn cmd_track(a: TrackArgs) -> Result<()> {
    let config = config_or_default(&a.config)?;
    let (manifest, frames) = load_sequence(&a.seq)?;
    let init = init_rect(a.init, &manifest)?;
    let run = track_sequence(&frames, init, &config)?;
    create_dir(&a.out_dir)?;
    let (w, h) = (frames[0].width(), frames[0].height());

    let first = union_masks(w, h, run.init_masks.iter().cloned());
    save_mask(&first, a.out_dir.join("mask_00000.pgm"))?;
    let mut reports = vec![FrameReport {
        frame: 0,
        distance: 0.0,
        bbox: first.bbox(),
        accepted: true,
        millis: run.init_millis,
        targets: run
            .init_masks
            .iter()
            .map(|m| TargetReport {
                distance: 0.0,
                bbox: m.bbox(),
                accepted: true,
            })
            .collect(),
    }];
    for (res, &ms) in run.results.iter().zip(&run.frame_millis) {
        let mask = union_masks(
            w,
            h,
            res.targets.iter().filter(|t| t.accepted).map(|t| t.mask.clone()),
        );
        save_mask(&mask, a.out_dir.join(format!("mask_{:05}.pgm", res.frame)))?;
        reports.push(FrameReport {
            frame: res.frame,
            distance: res.targets.iter().map(|t| t.distance).fold(f64::INFINITY, f64::min),
            bbox: mask.bbox(),
            accepted: res.targets.iter().any(|t| t.accepted),
            millis: ms,
            targets: res
                .targets
                .iter()
                .map(|t| TargetReport {
                    distance: t.distance,
                    bbox: t.bbox,
                    accepted: t.accepted,
                })
                .collect(),
        });
    }
    let accepted = reports.iter().filter(|r| r.accepted).count();
    let report = TrackReport {
        init,
        init_millis: run.init_millis,
        mean_millis: run.mean_millis(),
        median_millis: run.median_millis(),
        frames: reports,
    };
    write_json(&a.out_dir.join("report.json"), &report)?;
    println!(
        "tracked {} frames ({} accepted), mean {:.2} ms/frame",
        frames.len(),
        accepted,
        report.mean_millis
    );
    Ok(())
}

#[derive(Serialize)]
struct SliceReport {
    slice: usize,
    area: usize,
    accepted: bool,
    distance: f64,
    millis: f64,
}

#[derive(Serialize)]
struct VolumeReport {
    init: Rect,
    init_slice: usize,
    volume: usize,
    slices: Vec<SliceReport>,
}

fn cmd_slices(a: SlicesArgs) -> Result<()> {
    let config = config_or_default(&a.config)?;
    let (manifest, slices) = load_sequence(&a.slices)?;
    let init = init_rect(a.init, &manifest)?;
    let k = a.init_slice.or(manifest.init_slice).unwrap_or(0);
    let run = track_slices_3d(&slices, k, init, &config)?;
    create_dir(&a.out_dir)?;
    for (i, m) in run.masks.iter().enumerate() {
        save_mask(m, a.out_dir.join(format!("mask_{i:05}.pgm")))?;
    }
    let areas = run.areas();
    let report = VolumeReport {
        init,
        init_slice: k,
        volume: areas.iter().sum(),
        slices: (0..slices.len())
            .map(|i| SliceReport {
                slice: i,
                area: areas[i],
                accepted: run.accepted[i],
                distance: run.distances[i],
                millis: run.slice_millis[i],
            })
            .collect(),
    };
    write_json(&a.out_dir.join("volume.json"), &report)?;
    println!("{} slices, volume {} voxels", slices.len(), report.volume);
    Ok(())
}

#[derive(Serialize)]
struct DetectionReport {
    index: usize,
    /// Tree the node belongs to (0 for the homogeneous tree).
    tree: usize,
    node: usize,
    level: u32,
    stable_level: u32,
    stability: f64,
    area: u64,
    bbox: Rect,
    file: String,
}

fn cmd_extract(a: ExtractArgs) -> Result<()> {
    let mut config = config_or_default(&a.config)?;
    let st = &mut config.stability;
    if let Some(d) = a.delta {
        st.delta = d;
    }
    if let Some(m) = a.min_area {
        st.min_area = m;
    }
    if let Some(f) = a.max_area_fraction {
        st.max_area_fraction = f;
    }
    if a.normalized {
        st.normalized_stability = true;
    }
    if let Some(n) = a.norm {
        config.tree.norm = n;
    }
    if let Some(q) = a.bins {
        config.tree.quantization_bins = q;
    }
    config.validate()?;

    let full = load_image(&a.image)?;
    let region = match a.roi {
        Some(r) => full.crop(r)?,
        None => full.clone(),
    };
    let trees = if a.extremal_baseline {
        build_extremal_trees(&region)?
    } else {
        vec![build_component_tree(&region, &config.tree)?]
    };
    let detections: Vec<_> = if a.extremal_baseline {
        extract_extremal(&trees, &config.stability)?
    } else {
        extract_mshr(&trees[0], &config.stability)?
            .into_iter()
            .map(|d| (0, d))
            .collect()
    };
    create_dir(&a.out_dir)?;
    if let Some(p) = &a.dump_tree {
        let dumps: Vec<_> = trees.iter().map(|t| t.debug_dump()).collect();
        if dumps.len() == 1 {
            write_json(p, &dumps[0])?;
        } else {
            write_json(p, &dumps)?;
        }
    }
    let (r0, c0) = region.origin();
    let mut report = Vec::with_capacity(detections.len());
    for (index, (t, d)) in detections.iter().enumerate() {
        let tree = &trees[*t];
        let mask = SegmentationMask::from_region_pixels(
            full.width(),
            full.height(),
            &region,
            tree.node_region_pixels(d.node)?,
        );
        let file = format!("mshr_{index:03}.pgm");
        save_mask(&mask, a.out_dir.join(&file))?;
        report.push(DetectionReport {
            index,
            tree: *t,
            node: d.node,
            level: d.level,
            stable_level: d.stable_level,
            stability: d.stability,
            area: d.area,
            bbox: tree.nodes()[d.node].bbox().translated(r0, c0),
            file,
        });
    }
    write_json(&a.out_dir.join("report.json"), &report)?;
    println!("{} detections", report.len());
    Ok(())
}

/// Mask files in a directory (sorted `.pgm` names), the `gt` (else `frames`)
/// list of a manifest, or a single mask file.
fn mask_paths(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut out: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
            .collect();
        out.sort();
        return Ok(out);
    }
    if path.extension().is_some_and(|x| x == "json") {
        let (m, base) = SequenceManifest::load(path)?;
        let list = if m.gt.is_empty() { m.frames } else { m.gt };
        return Ok(list.iter().map(|f| base.join(f)).collect());
    }
    Ok(vec![path.to_path_buf()])
}

fn load_masks(path: &Path) -> Result<Vec<SegmentationMask>> {
    mask_paths(path)?.iter().map(load_mask).collect()
}

#[derive(Serialize)]
struct EvalSummary {
    frames: usize,
    mean_iou: f64,
    median_iou: f64,
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let pred = load_masks(&a.pred)?;
    let gt = load_masks(&a.gt)?;
    let curve = overlap_curve(&pred, &gt)?;
    curve.write_data(&a.out)?;
    let summary = EvalSummary {
        frames: curve.records.len(),
        mean_iou: curve.mean,
        median_iou: curve.median,
    };
    if let Some(p) = &a.summary {
        write_json(p, &summary)?;
    }
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

#[derive(Serialize)]
struct BoxRecord {
    frame: usize,
    iou: f64,
    rect: Option<Rect>,
    exact: bool,
}

fn cmd_best_box(a: BestBoxArgs) -> Result<()> {
    let gt = load_masks(&a.gt)?;
    let mut records = Vec::with_capacity(gt.len());
    let mut data = String::new();
    for (frame, m) in gt.iter().enumerate() {
        let rec = if m.is_empty() {
            BoxRecord {
                frame,
                iou: 0.0,
                rect: None,
                exact: true,
            }
        } else {
            let b = best_box(m, a.mode)?;
            BoxRecord {
                frame,
                iou: b.iou,
                rect: Some(b.rect),
                exact: b.exact,
            }
        };
        data.push_str(&format!("{} {:.6}\n", frame, rec.iou));
        records.push(rec);
    }
    fs::write(&a.out, data).map_err(|e| Error::io(&a.out, e))?;
    let mean = if records.is_empty() {
        0.0
    } else {
        records.iter().map(|r| r.iou).sum::<f64>() / records.len() as f64
    };
    println!(
        "{}",
        serde_json::json!({ "frames": records.len(), "mean_iou": mean, "boxes": records })
    );
    Ok(())
}

fn cmd_gen_scene(a: GenSceneArgs) -> Result<()> {
    let mut p = SceneParams::new(a.kind);
    p.seed = a.seed;
    p.static_scene = a.static_scene;
    p.occlude_frame = a.occlude_frame;
    macro_rules! set {
        ($($field:ident = $arg:expr),*) => {$( if let Some(v) = $arg { p.$field = v; } )*};
    }
    set!(
        frames = a.frames,
        width = a.width,
        height = a.height,
        channels = a.channels,
        block_size = a.block_size,
        max_shift = a.max_shift,
        max_rotation_deg = a.max_rotation,
        background = a.background,
        noise = a.noise,
        sphere_radius = a.radius
    );
    let scene = generate(&p)?;
    scene.write(&a.out_dir)?;
    let i = scene.init;
    println!(
        "wrote {} frames to {} (init {},{},{},{})",
        scene.frames.len(),
        a.out_dir.display(),
        i.row0,
        i.col0,
        i.height,
        i.width
    );
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    if a.repeats == 0 {
        return Err(Error::InvalidParam("repeats must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let params = TreeParams::default();
    println!("{:>6} {:>8} {:>10} {:>10} {:>10} {:>10}", "side", "channels", "pixels", "nodes", "ms", "ns/pixel");
    for &c in &a.channels {
        for &side in &a.sizes {
            let samples: Vec<i32> = (0..side * side * c).map(|_| rng.gen_range(0..256)).collect();
            let img = MultichannelImage::new(side, side, c, 255, samples)?;
            let mut times = Vec::with_capacity(a.repeats);
            let mut nodes = 0;
            for _ in 0..a.repeats {
                let t = Instant::now();
                let tree = build_component_tree(&img, &params)?;
                times.push(t.elapsed().as_secs_f64() * 1e3);
                nodes = tree.len();
            }
            let ms = crate::tracker::median(&times);
            println!(
                "{:>6} {:>8} {:>10} {:>10} {:>10.2} {:>10.1}",
                side,
                c,
                side * side,
                nodes,
                ms,
                ms * 1e6 / (side * side) as f64
            );
        }
    }
    Ok(())
}
