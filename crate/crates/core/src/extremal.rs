//! Gray-level extremal-region trees, one per channel and polarity. These
//! back the MSER-style baseline: a region is only representable here if all
//! of its pixels are darker (or all lighter) than its outer boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::MultichannelImage;
use crate::stability::{extract_mshr, MshrDetection, StabilityParams};
use crate::tree::{Builder, ComponentTree, TreeScratch};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// Components of `{p : I(p) <= t}`.
    Dark,
    /// Components of `{p : I(p) >= t}`, with level `maxval - t`.
    Bright,
}

/// Builds the extremal tree of one channel. Levels are gray values (or
/// inverted gray values for [`Polarity::Bright`]); accumulators cover all
/// channels of `image`.
pub fn build_extremal_tree(image: &MultichannelImage, channel: usize, polarity: Polarity) -> Result<ComponentTree> {
    if channel >= image.channels() {
        return Err(Error::InvalidParam(format!(
            "channel {channel} out of range for {} channels",
            image.channels()
        )));
    }
    let (w, h) = (image.width(), image.height());
    let n = w * h;
    let maxval = image.maxval();
    let levels: Vec<u32> = (0..n)
        .map(|p| {
            let v = image.pixel_at(p)[channel] as u32;
            match polarity {
                Polarity::Dark => v,
                Polarity::Bright => maxval - v,
            }
        })
        .collect();

    let mut start = vec![0u32; maxval as usize + 2];
    for &l in &levels {
        start[l as usize + 1] += 1;
    }
    for i in 1..start.len() {
        start[i] += start[i - 1];
    }
    let mut order = vec![0u32; n];
    for (p, &l) in levels.iter().enumerate() {
        let slot = &mut start[l as usize];
        order[*slot as usize] = p as u32;
        *slot += 1;
    }

    let mut active = vec![false; n];
    let mut scratch = TreeScratch::default();
    let mut builder = Builder::new(levels.iter().copied(), &mut scratch);
    for &p in &order {
        let p = p as usize;
        let level = levels[p];
        active[p] = true;
        let (r, c) = (p / w, p % w);
        let mut join = |q: usize| {
            if active[q] {
                builder.merge(p as u32, q as u32, level);
            }
        };
        if c > 0 {
            join(p - 1);
        }
        if c + 1 < w {
            join(p + 1);
        }
        if r > 0 {
            join(p - w);
        }
        if r + 1 < h {
            join(p + w);
        }
    }
    Ok(builder.finish(image, maxval, &mut scratch))
}

/// Dark and bright trees for every channel, in `(channel, polarity)` order.
pub fn build_extremal_trees(image: &MultichannelImage) -> Result<Vec<ComponentTree>> {
    let mut trees = Vec::with_capacity(2 * image.channels());
    for ch in 0..image.channels() {
        trees.push(build_extremal_tree(image, ch, Polarity::Dark)?);
        trees.push(build_extremal_tree(image, ch, Polarity::Bright)?);
    }
    Ok(trees)
}

/// Maximally stable extremal regions over all extremal trees, as
/// `(tree index, detection)` sorted by ascending score.
pub fn extract_extremal(trees: &[ComponentTree], params: &StabilityParams) -> Result<Vec<(usize, MshrDetection)>> {
    let mut all = Vec::new();
    for (t, tree) in trees.iter().enumerate() {
        all.extend(extract_mshr(tree, params)?.into_iter().map(|d| (t, d)));
    }
    all.sort_by(|a, b| {
        a.1.stability
            .total_cmp(&b.1.stability)
            .then(a.0.cmp(&b.0))
            .then(a.1.node.cmp(&b.1.node))
    });
    Ok(all)
}
