//! Deterministic synthetic sequences with exact ground-truth masks.
//!
//! * `block`: a rotating, translating colored square on a flat or gradient
//!   background.
//! * `fig1-block`: the same square on a background split into a darker left
//!   half and a lighter right half, with every channel of the square strictly
//!   between the two. The square starts on the split, so it is homogeneous
//!   but not extremal.
//! * `sphere`: slices through a voxelized ball ("organ") next to a brighter
//!   disc, one slice per frame.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{MultichannelImage, Rect, SegmentationMask};
use crate::pnm::{save_image, save_mask, SequenceManifest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    Block,
    /// Block between a darker and a lighter half; `fig1-block` on the
    /// command line.
    #[serde(rename = "fig1-block")]
    #[value(name = "fig1-block")]
    NonExtremalBlock,
    Sphere,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Background {
    #[default]
    Flat,
    Gradient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub kind: SceneKind,
    pub width: usize,
    pub height: usize,
    /// Frames, or slices for `sphere`.
    pub frames: usize,
    pub seed: u64,
    /// Channel count for block scenes; the sphere is single-channel.
    pub channels: usize,
    pub block_size: usize,
    /// Largest per-frame translation in pixels along each axis.
    pub max_shift: i64,
    /// Largest per-frame rotation in degrees.
    pub max_rotation_deg: f64,
    pub background: Background,
    /// Repeat frame 0 for every frame.
    pub static_scene: bool,
    /// Frame (or slice) whose target is covered by a noise-textured occluder.
    pub occlude_frame: Option<usize>,
    /// Uniform sample noise amplitude added to every pixel.
    pub noise: i32,
    /// In-plane radius of the sphere at its equator.
    pub sphere_radius: f64,
}

impl SceneParams {
    pub fn new(kind: SceneKind) -> Self {
        let (width, height, frames) = match kind {
            SceneKind::Sphere => (160, 160, 21),
            _ => (160, 160, 50),
        };
        SceneParams {
            kind,
            width,
            height,
            frames,
            seed: 0,
            channels: if kind == SceneKind::Sphere { 1 } else { 3 },
            block_size: 28,
            max_shift: 8,
            max_rotation_deg: 5.0,
            background: Background::Flat,
            static_scene: false,
            occlude_frame: None,
            noise: 0,
            sphere_radius: 40.0,
        }
    }
}

/// Generated frames, ground truth and a suggested init rectangle.
#[derive(Clone, Debug)]
pub struct Scene {
    pub frames: Vec<MultichannelImage>,
    pub gt: Vec<SegmentationMask>,
    pub init: Rect,
    pub init_slice: usize,
    /// Analytic cross-section area per slice (sphere only).
    pub analytic_areas: Vec<f64>,
}

pub fn generate(params: &SceneParams) -> Result<Scene> {
    if params.frames == 0 {
        return Err(Error::InvalidParam("scene needs at least one frame".into()));
    }
    if params.channels == 0 {
        return Err(Error::InvalidParam("scene needs at least one channel".into()));
    }
    match params.kind {
        SceneKind::Block | SceneKind::NonExtremalBlock => block_scene(params),
        SceneKind::Sphere => sphere_scene(params),
    }
}

struct Palette {
    left: Vec<i32>,
    right: Vec<i32>,
    target: Vec<i32>,
}

fn palette(params: &SceneParams, rng: &mut ChaCha8Rng) -> Palette {
    let c = params.channels;
    let mut left = Vec::with_capacity(c);
    let mut right = Vec::with_capacity(c);
    let mut target = Vec::with_capacity(c);
    for ch in 0..c {
        match params.kind {
            SceneKind::NonExtremalBlock => {
                let (lo, hi) = (rng.gen_range(20..70), rng.gen_range(185..240));
                target.push(rng.gen_range(105..150));
                // alternate which half is darker so no channel is extremal
                if ch % 2 == 0 {
                    left.push(lo);
                    right.push(hi);
                } else {
                    left.push(hi);
                    right.push(lo);
                }
            }
            _ => {
                let bg = rng.gen_range(30..90);
                left.push(bg);
                right.push(bg);
                target.push(if ch % 2 == 0 {
                    rng.gen_range(170..230)
                } else {
                    rng.gen_range(100..140)
                });
            }
        }
    }
    Palette {
        left,
        right,
        target,
    }
}

fn add_noise(img: &mut MultichannelImage, amplitude: i32, rng: &mut ChaCha8Rng) {
    if amplitude <= 0 {
        return;
    }
    let c = img.channels();
    for r in 0..img.height() {
        for col in 0..img.width() {
            let px: Vec<i32> = img
                .pixel(r, col)
                .iter()
                .map(|&v| v + rng.gen_range(-amplitude..=amplitude))
                .collect();
            debug_assert_eq!(px.len(), c);
            img.set_pixel(r, col, &px);
        }
    }
}

fn block_scene(params: &SceneParams) -> Result<Scene> {
    let (w, h) = (params.width, params.height);
    let size = params.block_size as f64;
    if params.block_size < 4 || 2 * params.block_size >= w.min(h) {
        return Err(Error::InvalidParam(format!(
            "block size {} does not fit a {w}x{h} frame",
            params.block_size
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let pal = palette(params, &mut rng);
    let margin = size * 0.75 + 2.0;
    let mut center = (h as f64 / 2.0 - 0.5, w as f64 / 2.0 - 0.5);
    let mut angle = 0.0f64;
    let mut velocity = (0i64, 0i64);

    let mut frames = Vec::with_capacity(params.frames);
    let mut gt = Vec::with_capacity(params.frames);
    for k in 0..params.frames {
        if k > 0 && !params.static_scene {
            velocity = (
                rng.gen_range(-params.max_shift..=params.max_shift),
                rng.gen_range(-params.max_shift..=params.max_shift),
            );
            let mut next = (center.0 + velocity.0 as f64, center.1 + velocity.1 as f64);
            if next.0 < margin || next.0 > h as f64 - 1.0 - margin {
                next.0 = center.0 - velocity.0 as f64;
            }
            if next.1 < margin || next.1 > w as f64 - 1.0 - margin {
                next.1 = center.1 - velocity.1 as f64;
            }
            center = next;
            angle += rng.gen_range(-params.max_rotation_deg..=params.max_rotation_deg).to_radians();
        }
        let mut img = MultichannelImage::filled(w, h, &pal.left)?;
        for r in 0..h {
            for c in 0..w {
                let px = match (params.kind, params.background) {
                    (SceneKind::NonExtremalBlock, _) => {
                        if c < w / 2 {
                            pal.left.clone()
                        } else {
                            pal.right.clone()
                        }
                    }
                    (_, Background::Flat) => pal.left.clone(),
                    (_, Background::Gradient) => pal
                        .left
                        .iter()
                        .map(|&v| v + (c * 60 / w) as i32)
                        .collect(),
                };
                img.set_pixel(r, c, &px);
            }
        }
        let mask = rotated_square(w, h, center, size / 2.0, angle);
        let occluded = params.occlude_frame == Some(k);
        for i in mask.indices() {
            let (r, c) = (i / w, i % w);
            if occluded {
                let px: Vec<i32> = (0..params.channels).map(|_| rng.gen_range(0..=255)).collect();
                img.set_pixel(r, c, &px);
            } else {
                img.set_pixel(r, c, &pal.target);
            }
        }
        add_noise(&mut img, params.noise, &mut rng);
        frames.push(img);
        gt.push(if occluded {
            SegmentationMask::new(w, h)
        } else {
            mask
        });
    }
    let _ = velocity;

    let bbox = gt[0]
        .bbox()
        .ok_or_else(|| Error::InvalidParam("target not visible on frame 0".into()))?;
    let pad = (params.block_size * 2 / 7) as i64;
    let init = Rect::clamped(
        bbox.row0 as i64 - pad,
        bbox.col0 as i64 - pad,
        bbox.height as i64 + 2 * pad,
        bbox.width as i64 + 2 * pad,
        h,
        w,
    )
    .ok_or(Error::EmptyIntersection)?;
    Ok(Scene {
        frames,
        gt,
        init,
        init_slice: 0,
        analytic_areas: Vec::new(),
    })
}

/// Pixels whose centers lie strictly inside a square of half side `half`
/// centered at `center` and rotated by `angle`.
pub fn rotated_square(w: usize, h: usize, center: (f64, f64), half: f64, angle: f64) -> SegmentationMask {
    let (s, c) = angle.sin_cos();
    let reach = (half * std::f64::consts::SQRT_2).ceil() as i64 + 1;
    let mut mask = SegmentationMask::new(w, h);
    let (r0, r1) = (center.0 as i64 - reach, center.0 as i64 + reach);
    let (c0, c1) = (center.1 as i64 - reach, center.1 as i64 + reach);
    for r in r0.max(0)..=r1.min(h as i64 - 1) {
        for col in c0.max(0)..=c1.min(w as i64 - 1) {
            let (dr, dc) = (r as f64 - center.0, col as f64 - center.1);
            let u = dc * c + dr * s;
            let v = -dc * s + dr * c;
            if u.abs() < half && v.abs() < half {
                mask.set(r as usize, col as usize, true);
            }
        }
    }
    mask
}

fn disk(w: usize, h: usize, center: (f64, f64), radius: f64) -> SegmentationMask {
    let idx = (0..w * h).filter(|&i| {
        let (dr, dc) = ((i / w) as f64 - center.0, (i % w) as f64 - center.1);
        dr * dr + dc * dc <= radius * radius
    });
    SegmentationMask::from_indices(w, h, idx)
}

const SPHERE_BACKGROUND: i32 = 60;
const SPHERE_ORGAN: i32 = 140;
const SPHERE_BRIGHT: i32 = 230;

fn sphere_scene(params: &SceneParams) -> Result<Scene> {
    let (w, h) = (params.width, params.height);
    let radius = params.sphere_radius;
    if 2.0 * radius + 4.0 > w.min(h) as f64 {
        return Err(Error::InvalidParam(format!(
            "sphere radius {radius} does not fit a {w}x{h} slice"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.frames;
    let mid = (n as f64 - 1.0) / 2.0;
    let dz = radius / (mid + 0.5);
    let center = (h as f64 / 2.0 - 0.5, w as f64 / 2.0 - 0.5);
    // brighter neighbour touching the organ from below-right
    let bright_r = radius * 0.3;
    let off = (radius + bright_r) / std::f64::consts::SQRT_2 - 1.0;
    let bright_center = (center.0 + off, center.1 + off);

    let mut frames = Vec::with_capacity(n);
    let mut gt = Vec::with_capacity(n);
    let mut analytic_areas = Vec::with_capacity(n);
    for k in 0..n {
        let z = (k as f64 - mid) * dz;
        let r = (radius * radius - z * z).max(0.0).sqrt();
        analytic_areas.push(std::f64::consts::PI * r * r);
        let organ = disk(w, h, center, r);
        let bright = disk(w, h, bright_center, bright_r);
        let mut img = MultichannelImage::filled(w, h, &vec![SPHERE_BACKGROUND; params.channels])?;
        for i in bright.indices() {
            img.set_pixel(i / w, i % w, &vec![SPHERE_BRIGHT; params.channels]);
        }
        let occluded = params.occlude_frame == Some(k);
        let mut visible = SegmentationMask::new(w, h);
        for i in organ.indices() {
            if bright.bits()[i] {
                continue;
            }
            visible.set(i / w, i % w, true);
            if occluded {
                let px: Vec<i32> = (0..params.channels).map(|_| rng.gen_range(0..=255)).collect();
                img.set_pixel(i / w, i % w, &px);
            } else {
                img.set_pixel(i / w, i % w, &vec![SPHERE_ORGAN; params.channels]);
            }
        }
        add_noise(&mut img, params.noise, &mut rng);
        frames.push(img);
        gt.push(if occluded {
            SegmentationMask::new(w, h)
        } else {
            visible
        });
    }
    let init_slice = n / 2;
    let equator = gt[init_slice]
        .bbox()
        .ok_or_else(|| Error::InvalidParam("organ not visible on the middle slice".into()))?;
    let pad = (radius * 0.5).round() as i64;
    let init = Rect::clamped(
        equator.row0 as i64 - pad,
        equator.col0 as i64 - pad,
        equator.height as i64 + 2 * pad,
        equator.width as i64 + 2 * pad,
        h,
        w,
    )
    .ok_or(Error::EmptyIntersection)?;
    Ok(Scene {
        frames,
        gt,
        init,
        init_slice,
        analytic_areas,
    })
}

impl Scene {
    /// Writes `frames/frame_NNNNN.{pgm,ppm,json}`, `gt/mask_NNNNN.pgm` and a
    /// `sequence.json` manifest into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for sub in ["frames", "gt"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        let mut manifest = SequenceManifest::default();
        for (k, (frame, gt)) in self.frames.iter().zip(&self.gt).enumerate() {
            let ext = match frame.channels() {
                1 => "pgm",
                3 => "ppm",
                _ => "json",
            };
            let name = format!("frames/frame_{k:05}.{ext}");
            save_image(frame, dir.join(&name))?;
            manifest.frames.push(name);
            let gt_name = format!("gt/mask_{k:05}.pgm");
            save_mask(gt, dir.join(&gt_name))?;
            manifest.gt.push(gt_name);
        }
        let i = self.init;
        manifest.init = Some([i.row0, i.col0, i.height, i.width]);
        manifest.init_slice = Some(self.init_slice);
        manifest.save(dir.join("sequence.json"))
    }
}
