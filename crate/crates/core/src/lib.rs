//! Maximally stable homogeneous regions: detection on an edge-based
//! component tree of multichannel images, tracking by moment-feature
//! matching, and overlap evaluation.

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod extremal;
pub mod features;
pub mod image;
pub mod pnm;
pub mod scene;
pub mod stability;
pub mod tracker;
pub mod tree;
pub mod union_find;

pub use config::{load_config, parse_config};
pub use error::{Error, Result};
pub use eval::{best_box, iou, overlap_curve, BestBoxMode, BestBoxResult, OverlapCurve};
pub use extremal::{build_extremal_tree, build_extremal_trees, extract_extremal, Polarity};
pub use features::{feature_distance, update_features, FeatureVector, FeatureWeights, Moments};
pub use image::{crop, MultichannelImage, Rect, SegmentationMask};
pub use stability::{extract_mshr, stability, MshrDetection, StabilityParams};
pub use tracker::{
    init_tracker, track_sequence, track_slices_3d, track_step, RegionKind, TrackResult, TrackerConfig,
    TrackerState,
};
pub use tree::{build_component_tree, build_component_tree_with, ComponentTree, NodeId, Norm, TreeParams, TreeScratch};
