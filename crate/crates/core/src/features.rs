//! Rotation-invariant region and gray-value features computed from moment
//! accumulators, their weighted comparison, and the exponential model update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{ComponentTree, NodeId};

/// Raw region moments `m_pq = sum r^p c^q` up to order two, with `r` the row
/// and `c` the column of each pixel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Moments {
    pub m00: i64,
    pub m10: i64,
    pub m01: i64,
    pub m20: i64,
    pub m02: i64,
    pub m11: i64,
}

impl Moments {
    #[inline]
    pub fn add_pixel(&mut self, r: i64, c: i64) {
        self.m00 += 1;
        self.m10 += r;
        self.m01 += c;
        self.m20 += r * r;
        self.m02 += c * c;
        self.m11 += r * c;
    }

    #[inline]
    pub fn add(&mut self, other: &Moments) {
        self.m00 += other.m00;
        self.m10 += other.m10;
        self.m01 += other.m01;
        self.m20 += other.m20;
        self.m02 += other.m02;
        self.m11 += other.m11;
    }

    /// `(mean row, mean column)`.
    pub fn centroid(&self) -> (f64, f64) {
        let n = self.m00 as f64;
        (self.m10 as f64 / n, self.m01 as f64 / n)
    }

    /// Central second moments scaled by `m00^2`, as exact integers:
    /// `(m00*m20 - m10^2, m00*m02 - m01^2, m00*m11 - m10*m01)`.
    pub fn scaled_central(&self) -> (i128, i128, i128) {
        let n = self.m00 as i128;
        (
            n * self.m20 as i128 - self.m10 as i128 * self.m10 as i128,
            n * self.m02 as i128 - self.m01 as i128 * self.m01 as i128,
            n * self.m11 as i128 - self.m10 as i128 * self.m01 as i128,
        )
    }
}

/// Moments of a region given as `(row, col)` pixels.
pub fn region_moments(pixels: impl IntoIterator<Item = (usize, usize)>) -> Result<Moments> {
    let mut m = Moments::default();
    for (r, c) in pixels {
        m.add_pixel(r as i64, c as i64);
    }
    if m.m00 == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok(m)
}

/// Ellipse with the same second moments as the region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipseParams {
    pub r1: f64,
    pub r2: f64,
    /// Major-axis angle from the column axis towards increasing rows, in
    /// `(-pi/2, pi/2]`.
    pub theta: f64,
}

/// Semi-axes are `2 * sqrt(eigenvalue)` of the normalized central
/// second-moment matrix. The central moments are formed in exact integer
/// arithmetic, so congruent regions on the pixel grid (translations and 90
/// degree rotations) yield bitwise identical axes.
pub fn ellipse_params(m: &Moments) -> Result<EllipseParams> {
    if m.m00 < 1 {
        return Err(Error::EmptyRegion);
    }
    let (a, b, c) = m.scaled_central();
    let norm = (m.m00 as f64) * (m.m00 as f64);
    let mu20 = a as f64 / norm;
    let mu02 = b as f64 / norm;
    let mu11 = c as f64 / norm;
    let half_trace = (mu20 + mu02) / 2.0;
    let half_diff = (mu20 - mu02) / 2.0;
    let disc = (half_diff * half_diff + mu11 * mu11).sqrt();
    let l1 = (half_trace + disc).max(0.0);
    let l2 = (half_trace - disc).max(0.0);
    let theta = if a == b && c == 0 {
        0.0
    } else {
        0.5 * (2.0 * c as f64).atan2((b - a) as f64)
    };
    Ok(EllipseParams {
        r1: 2.0 * l1.sqrt(),
        r2: 2.0 * l2.sqrt(),
        theta,
    })
}

/// Per-channel `(mean, deviation)` from sample sums and sums of squares.
pub fn channel_stats(sum: &[i64], sumsq: &[i64], area: u64) -> Result<Vec<(f64, f64)>> {
    if area == 0 {
        return Err(Error::EmptyRegion);
    }
    if sum.len() != sumsq.len() {
        return Err(Error::ChannelCount(sum.len(), sumsq.len()));
    }
    let n = area as i128;
    Ok(sum
        .iter()
        .zip(sumsq)
        .map(|(&s, &sq)| {
            let mean = s as f64 / area as f64;
            let scaled_var = n * sq as i128 - s as i128 * s as i128;
            let var = (scaled_var as f64 / (area as f64 * area as f64)).max(0.0);
            (mean, var.sqrt())
        })
        .collect())
}

/// Tracking features of one region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub area: f64,
    /// `(row, col)` in full-frame coordinates.
    pub centroid: (f64, f64),
    pub r1: f64,
    pub r2: f64,
    pub theta: f64,
    pub mean: Vec<f64>,
    pub deviation: Vec<f64>,
}

impl FeatureVector {
    /// Features of a tree node straight from its accumulators. `origin` is
    /// the offset of the tree's image in the full frame.
    pub fn from_node(tree: &ComponentTree, id: NodeId, origin: (usize, usize)) -> Result<Self> {
        let node = tree.node(id)?;
        let ellipse = ellipse_params(&node.moments)?;
        let (cr, cc) = node.moments.centroid();
        let stats = channel_stats(tree.channel_sums(id), tree.channel_sumsq(id), node.area)?;
        Ok(FeatureVector {
            area: node.area as f64,
            centroid: (cr + origin.0 as f64, cc + origin.1 as f64),
            r1: ellipse.r1,
            r2: ellipse.r2,
            theta: ellipse.theta,
            mean: stats.iter().map(|s| s.0).collect(),
            deviation: stats.iter().map(|s| s.1).collect(),
        })
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Bitwise equality, including the sign of zero.
    pub fn bitwise_eq(&self, other: &FeatureVector) -> bool {
        let scalars = |f: &FeatureVector| {
            [f.area, f.centroid.0, f.centroid.1, f.r1, f.r2, f.theta].map(f64::to_bits)
        };
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        scalars(self) == scalars(other)
            && bits(&self.mean) == bits(&other.mean)
            && bits(&self.deviation) == bits(&other.deviation)
    }
}

/// Feature weights for matching. Centroid and orientation never enter the
/// distance; the centroid can only gate candidates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureWeights {
    pub area: f64,
    pub axes: f64,
    pub channel_mean: f64,
    pub channel_dev: f64,
    /// Candidates whose centroid lies farther than this many pixels from the
    /// model centroid get an infinite distance. `None` disables the gate.
    pub centroid_gate_radius: Option<f64>,
}

impl Default for FeatureWeights {
    fn default() -> Self {
        FeatureWeights {
            area: 1.0,
            axes: 1.0,
            channel_mean: 1.0,
            channel_dev: 1.0,
            centroid_gate_radius: None,
        }
    }
}

impl FeatureWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.area, self.axes, self.channel_mean, self.channel_dev];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidParam("feature weights must be finite and >= 0".into()));
        }
        if !w.iter().any(|&x| x > 0.0) {
            return Err(Error::InvalidParam("at least one feature weight must be > 0".into()));
        }
        if let Some(r) = self.centroid_gate_radius {
            if !(r >= 0.0) {
                return Err(Error::InvalidParam("centroid_gate_radius must be >= 0".into()));
            }
        }
        Ok(())
    }
}

const DELTA_EPS: f64 = 1e-6;

/// Relative difference `|a - b| / max(|a|, |b|, eps)`; symmetric in its
/// arguments.
#[inline]
pub fn relative_difference(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(DELTA_EPS)
}

/// Weighted sum of relative differences over area, axes and per-channel
/// mean and deviation. Returns `f64::INFINITY` for candidates outside the
/// centroid gate.
pub fn feature_distance(a: &FeatureVector, b: &FeatureVector, w: &FeatureWeights) -> Result<f64> {
    if a.channels() != b.channels() {
        return Err(Error::ChannelCount(a.channels(), b.channels()));
    }
    if let Some(radius) = w.centroid_gate_radius {
        let dr = a.centroid.0 - b.centroid.0;
        let dc = a.centroid.1 - b.centroid.1;
        if (dr * dr + dc * dc).sqrt() > radius {
            return Ok(f64::INFINITY);
        }
    }
    let mut d = w.area * relative_difference(a.area, b.area)
        + w.axes * (relative_difference(a.r1, b.r1) + relative_difference(a.r2, b.r2));
    for ch in 0..a.channels() {
        d += w.channel_mean * relative_difference(a.mean[ch], b.mean[ch])
            + w.channel_dev * relative_difference(a.deviation[ch], b.deviation[ch]);
    }
    Ok(d)
}

#[inline]
fn blend(prev: f64, new: f64, lambda: f64) -> f64 {
    if lambda == 1.0 {
        new
    } else {
        prev + lambda * (new - prev)
    }
}

/// `(1 - lambda) * prev + lambda * new` for every real-valued feature. The
/// orientation is blended on the doubled-angle circle.
pub fn update_features(prev: &FeatureVector, new: &FeatureVector, lambda: f64) -> Result<FeatureVector> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidLambda(lambda));
    }
    if prev.channels() != new.channels() {
        return Err(Error::ChannelCount(prev.channels(), new.channels()));
    }
    if lambda == 0.0 {
        return Ok(prev.clone());
    }
    if lambda == 1.0 {
        return Ok(new.clone());
    }
    let theta = {
        let (s0, c0) = (2.0 * prev.theta).sin_cos();
        let (s1, c1) = (2.0 * new.theta).sin_cos();
        let s = blend(s0, s1, lambda);
        let c = blend(c0, c1, lambda);
        if s == 0.0 && c == 0.0 {
            prev.theta
        } else {
            let t = 0.5 * s.atan2(c);
            if t <= -std::f64::consts::FRAC_PI_2 {
                t + std::f64::consts::PI
            } else {
                t
            }
        }
    };
    let zip = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(&x, &y)| blend(x, y, lambda)).collect();
    Ok(FeatureVector {
        area: blend(prev.area, new.area, lambda),
        centroid: (
            blend(prev.centroid.0, new.centroid.0, lambda),
            blend(prev.centroid.1, new.centroid.1, lambda),
        ),
        r1: blend(prev.r1, new.r1, lambda),
        r2: blend(prev.r2, new.r2, lambda),
        theta,
        mean: zip(&prev.mean, &new.mean),
        deviation: zip(&prev.deviation, &new.deviation),
    })
}
