//! Region tracking by matching a stored feature model against every node of
//! the component tree built on a search window around the last position.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::{build_extremal_trees, extract_extremal};
use crate::features::{feature_distance, relative_difference, update_features, FeatureVector, FeatureWeights};
use crate::image::{MultichannelImage, Rect, SegmentationMask};
use crate::stability::{extract_mshr, StabilityParams};
use crate::tree::{build_component_tree_with, ComponentTree, NodeId, TreeParams, TreeScratch};

/// Which hierarchy supplies candidate regions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    /// Edge-based component tree (homogeneous regions).
    #[default]
    Homogeneous,
    /// Per-channel dark and bright gray-level trees (extremal regions).
    Extremal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub stability: StabilityParams,
    pub tree: TreeParams,
    pub weights: FeatureWeights,
    /// Model update rate.
    pub lambda: f64,
    /// Search window extent relative to the last bounding box.
    pub search_factor: f64,
    /// Number of stable regions kept from the init box.
    pub max_targets: usize,
    /// Largest feature distance accepted as a match.
    pub accept_threshold: f64,
    pub region_kind: RegionKind,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            stability: StabilityParams::default(),
            tree: TreeParams::default(),
            weights: FeatureWeights::default(),
            lambda: 0.5,
            search_factor: 2.0,
            max_targets: 1,
            accept_threshold: 1.0,
            region_kind: RegionKind::Homogeneous,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        self.stability.validate()?;
        self.tree.validate()?;
        self.weights.validate()?;
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidLambda(self.lambda));
        }
        if !(self.search_factor >= 1.0 && self.search_factor.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "search_factor must be >= 1, got {}",
                self.search_factor
            )));
        }
        if self.max_targets < 1 {
            return Err(Error::InvalidParam("max_targets must be >= 1".into()));
        }
        if !(self.accept_threshold >= 0.0) {
            return Err(Error::InvalidParam("accept_threshold must be >= 0".into()));
        }
        Ok(())
    }
}

/// One tracked region.
#[derive(Clone, Debug)]
pub struct Target {
    pub model: FeatureVector,
    pub mask: SegmentationMask,
    pub bbox: Rect,
    pub distance: f64,
    pub misses: u32,
    /// Stability score at initialization.
    pub init_stability: f64,
}

#[derive(Clone, Debug)]
pub struct TrackerState {
    pub config: TrackerConfig,
    pub frames_seen: usize,
    pub targets: Vec<Target>,
    scratch: Scratch,
}

/// Tree buffers reused from frame to frame. Clones start empty.
#[derive(Debug, Default)]
struct Scratch(TreeScratch);

impl Clone for Scratch {
    fn clone(&self) -> Self {
        Scratch::default()
    }
}

#[derive(Clone, Debug)]
pub struct TargetResult {
    /// Matched region in full-frame coordinates; empty on a miss.
    pub mask: SegmentationMask,
    pub bbox: Option<Rect>,
    /// Distance of the best candidate (`inf` if there was none).
    pub distance: f64,
    pub accepted: bool,
    /// Search window used for this frame.
    pub search: Rect,
}

#[derive(Clone, Debug)]
pub struct TrackResult {
    pub frame: usize,
    pub targets: Vec<TargetResult>,
}

fn build_trees(region: &MultichannelImage, config: &TrackerConfig, scratch: &mut TreeScratch) -> Result<Vec<ComponentTree>> {
    match config.region_kind {
        RegionKind::Homogeneous => Ok(vec![build_component_tree_with(region, &config.tree, scratch)?]),
        RegionKind::Extremal => build_extremal_trees(region),
    }
}

fn node_mask(frame: &MultichannelImage, region: &MultichannelImage, tree: &ComponentTree, id: NodeId) -> Result<SegmentationMask> {
    Ok(SegmentationMask::from_region_pixels(
        frame.width(),
        frame.height(),
        region,
        &tree.node_pixels(id)?,
    ))
}

fn node_bbox(region: &MultichannelImage, tree: &ComponentTree, id: NodeId) -> Rect {
    let (r0, c0) = region.origin();
    tree.nodes()[id].bbox().translated(r0, c0)
}

/// Extracts stable regions inside `init` and keeps the `max_targets` with the
/// lowest stability score as tracking targets.
pub fn init_tracker(image: &MultichannelImage, init: Rect, config: &TrackerConfig) -> Result<TrackerState> {
    config.validate()?;
    let region = image.crop(init)?;
    let trees = build_trees(&region, config, &mut TreeScratch::default())?;
    let detections = match config.region_kind {
        RegionKind::Homogeneous => extract_mshr(&trees[0], &config.stability)?
            .into_iter()
            .map(|d| (0, d))
            .collect(),
        RegionKind::Extremal => extract_extremal(&trees, &config.stability)?,
    };
    if detections.is_empty() {
        return Err(Error::NoMshr {
            nodes: trees.iter().map(ComponentTree::len).sum(),
        });
    }
    let mut targets = Vec::new();
    for (t, det) in detections.into_iter().take(config.max_targets) {
        let tree = &trees[t];
        targets.push(Target {
            model: FeatureVector::from_node(tree, det.node, region.origin())?,
            mask: node_mask(image, &region, tree, det.node)?,
            bbox: node_bbox(&region, tree, det.node),
            distance: 0.0,
            misses: 0,
            init_stability: det.stability,
        });
    }
    Ok(TrackerState {
        config: config.clone(),
        frames_seen: 1,
        targets,
        scratch: Scratch::default(),
    })
}

/// Window with the same center as `bbox` and `factor` times its extents,
/// clamped to the frame.
pub fn search_region(bbox: Rect, frame_height: usize, frame_width: usize, factor: f64) -> Result<Rect> {
    let (cr, cc) = bbox.center();
    let h = (bbox.height as f64 * factor).round();
    let w = (bbox.width as f64 * factor).round();
    let r0 = (cr - h / 2.0).round() as i64;
    let c0 = (cc - w / 2.0).round() as i64;
    Rect::clamped(r0, c0, h as i64, w as i64, frame_height, frame_width).ok_or(Error::EmptyIntersection)
}

/// Locates every target in a new frame. On a match within
/// `accept_threshold` the model is blended towards the matched features; on
/// a miss the model and search anchor stay unchanged.
pub fn track_step(state: &mut TrackerState, image: &MultichannelImage) -> Result<TrackResult> {
    let TrackerState {
        config,
        targets,
        scratch,
        ..
    } = state;
    let mut out = Vec::with_capacity(targets.len());
    for target in targets.iter_mut() {
        let search = search_region(target.bbox, image.height(), image.width(), config.search_factor)?;
        let region = image.crop(search)?;
        let mut trees = build_trees(&region, config, &mut scratch.0)?;
        let domain = region.pixel_count();

        // (distance, area, tree, node)
        let mut best: Option<(f64, u64, usize, NodeId)> = None;
        for (t, tree) in trees.iter().enumerate() {
            for (id, node) in tree.nodes().iter().enumerate() {
                if !config.stability.accepts_area(node.area, domain) {
                    continue;
                }
                // every other distance term is >= 0, so this bounds d from below
                if let Some((bd, ..)) = best {
                    let floor = config.weights.area * relative_difference(target.model.area, node.area as f64);
                    if floor > bd {
                        continue;
                    }
                }
                let features = FeatureVector::from_node(tree, id, region.origin())?;
                let d = feature_distance(&target.model, &features, &config.weights)?;
                let better = match best {
                    None => true,
                    Some((bd, ba, bt, bn)) => d
                        .total_cmp(&bd)
                        .then(node.area.cmp(&ba))
                        .then((t, id).cmp(&(bt, bn)))
                        .is_lt(),
                };
                if better {
                    best = Some((d, node.area, t, id));
                }
            }
        }

        match best {
            Some((d, _, t, id)) if d <= config.accept_threshold => {
                let tree = &trees[t];
                let features = FeatureVector::from_node(tree, id, region.origin())?;
                target.model = update_features(&target.model, &features, config.lambda)?;
                target.mask = node_mask(image, &region, tree, id)?;
                target.bbox = node_bbox(&region, tree, id);
                target.distance = d;
                target.misses = 0;
                out.push(TargetResult {
                    mask: target.mask.clone(),
                    bbox: Some(target.bbox),
                    distance: d,
                    accepted: true,
                    search,
                });
            }
            other => {
                target.misses += 1;
                out.push(TargetResult {
                    mask: SegmentationMask::new(image.width(), image.height()),
                    bbox: None,
                    distance: other.map_or(f64::INFINITY, |b| b.0),
                    accepted: false,
                    search,
                });
            }
        }
        if let Some(tree) = trees.pop() {
            scratch.0.recycle(tree);
        }
    }
    let frame = state.frames_seen;
    state.frames_seen += 1;
    Ok(TrackResult {
        frame,
        targets: out,
    })
}

/// Output of [`track_sequence`].
#[derive(Clone, Debug)]
pub struct SequenceRun {
    /// Target masks selected on frame 0.
    pub init_masks: Vec<SegmentationMask>,
    pub init_millis: f64,
    /// One result per frame after the first.
    pub results: Vec<TrackResult>,
    /// Wall-clock milliseconds of each `track_step`.
    pub frame_millis: Vec<f64>,
    pub final_state: TrackerState,
}

impl SequenceRun {
    pub fn mean_millis(&self) -> f64 {
        if self.frame_millis.is_empty() {
            return 0.0;
        }
        self.frame_millis.iter().sum::<f64>() / self.frame_millis.len() as f64
    }

    pub fn median_millis(&self) -> f64 {
        median(&self.frame_millis)
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Initializes on the first frame and tracks through the rest.
pub fn track_sequence(frames: &[MultichannelImage], init: Rect, config: &TrackerConfig) -> Result<SequenceRun> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidParam("empty frame sequence".into()))?;
    let t0 = Instant::now();
    let mut state = init_tracker(first, init, config)?;
    let init_millis = t0.elapsed().as_secs_f64() * 1e3;
    let init_masks = state.targets.iter().map(|t| t.mask.clone()).collect();
    let mut results = Vec::with_capacity(frames.len().saturating_sub(1));
    let mut frame_millis = Vec::with_capacity(frames.len().saturating_sub(1));
    for frame in &frames[1..] {
        let t = Instant::now();
        results.push(track_step(&mut state, frame)?);
        frame_millis.push(t.elapsed().as_secs_f64() * 1e3);
    }
    Ok(SequenceRun {
        init_masks,
        init_millis,
        results,
        frame_millis,
        final_state: state,
    })
}

/// Per-slice output of [`track_slices_3d`].
#[derive(Clone, Debug)]
pub struct SliceRun {
    pub masks: Vec<SegmentationMask>,
    pub accepted: Vec<bool>,
    pub distances: Vec<f64>,
    pub slice_millis: Vec<f64>,
}

impl SliceRun {
    pub fn areas(&self) -> Vec<usize> {
        self.masks.iter().map(SegmentationMask::count).collect()
    }
}

fn union_of_accepted(result: &TrackResult, width: usize, height: usize) -> (SegmentationMask, bool, f64) {
    let mut mask = SegmentationMask::new(width, height);
    let mut any = false;
    let mut distance = f64::INFINITY;
    for t in &result.targets {
        distance = distance.min(t.distance);
        if t.accepted {
            any = true;
            for i in t.mask.indices() {
                mask.set(i / width, i % width, true);
            }
        }
    }
    (mask, any, distance)
}

/// Initializes on `init_slice` and tracks forwards and backwards through the
/// stack with independent copies of the initial state. Slices where every
/// target was rejected get an empty mask.
pub fn track_slices_3d(slices: &[MultichannelImage], init_slice: usize, init: Rect, config: &TrackerConfig) -> Result<SliceRun> {
    if init_slice >= slices.len() {
        return Err(Error::InvalidParam(format!(
            "init slice {init_slice} out of range for {} slices",
            slices.len()
        )));
    }
    let n = slices.len();
    let mut masks = vec![SegmentationMask::new(0, 0); n];
    let mut accepted = vec![false; n];
    let mut distances = vec![f64::INFINITY; n];
    let mut slice_millis = vec![0.0; n];

    let t0 = Instant::now();
    let seed = init_tracker(&slices[init_slice], init, config)?;
    slice_millis[init_slice] = t0.elapsed().as_secs_f64() * 1e3;
    let (w, h) = (slices[init_slice].width(), slices[init_slice].height());
    let mut init_mask = SegmentationMask::new(w, h);
    for t in &seed.targets {
        for i in t.mask.indices() {
            init_mask.set(i / w, i % w, true);
        }
    }
    masks[init_slice] = init_mask;
    accepted[init_slice] = true;
    distances[init_slice] = 0.0;

    let forward: Vec<usize> = (init_slice + 1..n).collect();
    let backward: Vec<usize> = (0..init_slice).rev().collect();
    for order in [forward, backward] {
        let mut state = seed.clone();
        for k in order {
            let t = Instant::now();
            let result = track_step(&mut state, &slices[k])?;
            slice_millis[k] = t.elapsed().as_secs_f64() * 1e3;
            let (mask, ok, d) = union_of_accepted(&result, slices[k].width(), slices[k].height());
            masks[k] = mask;
            accepted[k] = ok;
            distances[k] = d;
        }
    }
    Ok(SliceRun {
        masks,
        accepted,
        distances,
        slice_millis,
    })
}
