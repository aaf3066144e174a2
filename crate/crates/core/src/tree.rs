//! Edge-based component tree.
//!
//! Every 4-neighbour pair of pixels is an edge whose weight is the quantized
//! norm of the channel difference. Admitting edges in increasing weight order
//! and recording each merge yields a hierarchy of homogeneous regions: a node
//! at level `t` is a connected component of the graph restricted to edges of
//! weight `<= t` (a quasi-flat zone). Nodes that form at the same level are
//! collapsed, so levels strictly increase towards the root.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Moments;
use crate::image::{MultichannelImage, Rect};
use crate::union_find::UnionFind;

pub type NodeId = usize;

const NONE: u32 = u32::MAX;

/// Norm used to turn a channel-difference vector into an edge magnitude.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    #[default]
    L2,
    Linf,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub norm: Norm,
    /// Number of quantization bins `Q`; edge levels lie in `[0, Q-1]`.
    pub quantization_bins: u32,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            norm: Norm::L2,
            quantization_bins: 256,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if !(2..=65536).contains(&self.quantization_bins) {
            return Err(Error::InvalidParam(format!(
                "quantization_bins must be in [2, 65536], got {}",
                self.quantization_bins
            )));
        }
        Ok(())
    }
}

/// Unquantized edge magnitude between two channel vectors.
pub fn edge_magnitude(a: &[i32], b: &[i32], norm: Norm) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ChannelCount(a.len(), b.len()));
    }
    let diffs = a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).abs());
    Ok(match norm {
        Norm::L1 => diffs.sum(),
        Norm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        Norm::Linf => diffs.fold(0.0, f64::max),
    })
}

/// Maps channel differences to integer levels by linear scaling of
/// `[0, max_norm]` onto `[0, Q-1]`, rounding up. A level is 0 exactly when
/// the two pixels are identical.
///
/// Levels are decided on an integer statistic (sum of absolute differences,
/// largest difference, or sum of squares for L2) against a per-level table
/// of exact upper bounds, so no floating-point rounding reaches the result.
#[derive(Clone, Debug)]
pub struct EdgeQuantizer {
    norm: Norm,
    /// Largest statistic mapped to each level.
    upper: Vec<u64>,
    /// Float estimate of `level / statistic` (or its square for L2).
    slope: f64,
    /// Level of every statistic value, when the range is small enough.
    lookup: Vec<u16>,
}

const LOOKUP_LIMIT: u128 = 1 << 20;

impl EdgeQuantizer {
    pub fn new(norm: Norm, bins: u32, channels: usize, maxval: u32) -> Self {
        let top = (bins.max(2) - 1) as u128;
        let (c, m) = (channels as u128, maxval as u128);
        // statistic s maps to the smallest k with s * top^e <= k^e * unit
        let (unit, squared) = match norm {
            Norm::L1 => (c * m, false),
            Norm::Linf => (m, false),
            Norm::L2 => (c * m * m, true),
        };
        let upper: Vec<u64> = (0..=top)
            .map(|k| {
                let (num, den) = if squared { (k * k * unit, top * top) } else { (k * unit, top) };
                (num / den) as u64
            })
            .collect();
        let slope = if unit == 0 {
            0.0
        } else if squared {
            (top * top) as f64 / unit as f64
        } else {
            top as f64 / unit as f64
        };
        let mut lookup = Vec::new();
        if unit < LOOKUP_LIMIT && top <= u16::MAX as u128 {
            lookup.reserve(unit as usize + 1);
            for (k, &hi) in upper.iter().enumerate() {
                lookup.resize((hi as usize + 1).max(lookup.len()), k as u16);
            }
        }
        EdgeQuantizer {
            norm,
            upper,
            slope,
            lookup,
        }
    }

    #[inline]
    fn statistic(&self, a: &[i32], b: &[i32]) -> u64 {
        let d = a.iter().zip(b).map(|(&x, &y)| x.abs_diff(y) as u64);
        match self.norm {
            Norm::L1 => d.sum(),
            Norm::Linf => d.max().unwrap_or(0),
            Norm::L2 => d.map(|x| x * x).sum(),
        }
    }

    #[inline]
    pub fn level(&self, a: &[i32], b: &[i32]) -> u32 {
        let s = self.statistic(a, b);
        if let Some(&k) = self.lookup.get(s as usize) {
            return k as u32;
        }
        if s == 0 {
            return 0;
        }
        let top = self.upper.len() - 1;
        let est = s as f64 * self.slope;
        let est = if self.norm == Norm::L2 { est.sqrt() } else { est };
        let mut k = (est.ceil() as usize).min(top);
        while k > 0 && s <= self.upper[k - 1] {
            k -= 1;
        }
        while k < top && s > self.upper[k] {
            k += 1;
        }
        k as u32
    }
}

/// One 4-neighbour edge with its quantized magnitude.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeRecord {
    pub pixel_a: u32,
    pub pixel_b: u32,
    pub magnitude: u32,
}

/// All horizontal and vertical edges in ascending `(pixel_a, pixel_b)` order.
pub fn quantized_edges(image: &MultichannelImage, params: &TreeParams) -> Result<Vec<EdgeRecord>> {
    params.validate()?;
    let quant = EdgeQuantizer::new(
        params.norm,
        params.quantization_bins,
        image.channels(),
        image.maxval(),
    );
    let (w, h) = (image.width(), image.height());
    let mut edges = Vec::with_capacity(2 * w * h);
    for p in 0..w * h {
        let (r, c) = (p / w, p % w);
        if c + 1 < w {
            edges.push(EdgeRecord {
                pixel_a: p as u32,
                pixel_b: (p + 1) as u32,
                magnitude: quant.level(image.pixel_at(p), image.pixel_at(p + 1)),
            });
        }
        if r + 1 < h {
            edges.push(EdgeRecord {
                pixel_a: p as u32,
                pixel_b: (p + w) as u32,
                magnitude: quant.level(image.pixel_at(p), image.pixel_at(p + w)),
            });
        }
    }
    Ok(edges)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    /// Threshold at which this component formed.
    pub level: u32,
    /// Smallest linear pixel index in the region; breaks area ties.
    pub min_pixel: u32,
    parent: u32,
    /// Inclusive `[row0, col0, row1, col1]`.
    bounds: [u32; 4],
    pub area: u64,
    pub moments: Moments,
}

impl TreeNode {
    pub fn parent(&self) -> Option<NodeId> {
        (self.parent != NONE).then_some(self.parent as NodeId)
    }

    pub fn bbox(&self) -> Rect {
        let [r0, c0, r1, c1] = self.bounds;
        Rect::new(r0 as usize, c0 as usize, (r1 - r0 + 1) as usize, (c1 - c0 + 1) as usize)
    }
}

/// Merge hierarchy of a (possibly cropped) image. Node ids are sorted by
/// level, so every child id is smaller than its parent id.
#[derive(Clone, Debug)]
pub struct ComponentTree {
    width: usize,
    height: usize,
    channels: usize,
    max_level: u32,
    nodes: Vec<TreeNode>,
    /// Per node: `channels` sums followed by `channels` sums of squares.
    channel_stats: Vec<i64>,
    roots: Vec<NodeId>,
    pixel_node: Vec<u32>,
    /// Built on first use; tracking never needs it.
    layout: OnceLock<Layout>,
}

/// Child lists and a pre-order pixel layout in which every node owns a
/// contiguous range of `pixel_order`.
#[derive(Clone, Debug)]
struct Layout {
    child_start: Vec<u32>,
    children: Vec<u32>,
    max_child: Vec<u32>,
    range_start: Vec<u32>,
    pixel_order: Vec<u32>,
}

impl Layout {
    fn new(nodes: &[TreeNode], roots: &[NodeId], pixel_node: &[u32]) -> Self {
        let kept = nodes.len();
        let mut child_start = vec![0u32; kept + 1];
        for node in nodes {
            if node.parent != NONE {
                child_start[node.parent as usize + 1] += 1;
            }
        }
        for i in 1..=kept {
            child_start[i] += child_start[i - 1];
        }
        let mut fill = child_start.clone();
        let mut children = vec![0u32; child_start[kept] as usize];
        let mut max_child = vec![NONE; kept];
        for (id, node) in nodes.iter().enumerate() {
            if node.parent == NONE {
                continue;
            }
            let p = node.parent as usize;
            children[fill[p] as usize] = id as u32;
            fill[p] += 1;
            let best = max_child[p];
            if best == NONE || {
                let b = &nodes[best as usize];
                node.area > b.area || (node.area == b.area && node.min_pixel < b.min_pixel)
            } {
                max_child[p] = id as u32;
            }
        }

        let mut range_start = vec![0u32; kept];
        let mut cursor = 0u32;
        for &r in roots {
            range_start[r] = cursor;
            cursor += nodes[r].area as u32;
        }
        for id in (0..kept).rev() {
            let kids = &children[child_start[id] as usize..child_start[id + 1] as usize];
            let child_area: u64 = kids.iter().map(|&c| nodes[c as usize].area).sum();
            let mut at = range_start[id] + (nodes[id].area - child_area) as u32;
            for &c in kids {
                range_start[c as usize] = at;
                at += nodes[c as usize].area as u32;
            }
        }
        let mut next = range_start.clone();
        let mut pixel_order = vec![0u32; pixel_node.len()];
        for (p, &id) in pixel_node.iter().enumerate() {
            pixel_order[next[id as usize] as usize] = p as u32;
            next[id as usize] += 1;
        }
        Layout {
            child_start,
            children,
            max_child,
            range_start,
            pixel_order,
        }
    }
}

/// Node summary used for the JSON debug dump.
#[derive(Debug, Serialize)]
pub struct NodeDump {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub level: u32,
    pub area: u64,
    pub bbox: Rect,
}

impl ComponentTree {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Largest representable level (`Q - 1` for edge trees).
    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&TreeNode> {
        self.nodes.get(id).ok_or(Error::InvalidNode(id))
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    /// Node the pixel is directly attached to (its leaf in an edge tree).
    pub fn pixel_leaf(&self, pixel: usize) -> Result<NodeId> {
        self.pixel_node
            .get(pixel)
            .map(|&n| n as NodeId)
            .ok_or(Error::PixelOutOfRange(pixel))
    }

    fn layout(&self) -> &Layout {
        self.layout
            .get_or_init(|| Layout::new(&self.nodes, &self.roots, &self.pixel_node))
    }

    pub fn children(&self, id: NodeId) -> &[u32] {
        let l = self.layout();
        &l.children[l.child_start[id] as usize..l.child_start[id + 1] as usize]
    }

    /// Child with the largest area (ties: smallest `min_pixel`).
    pub fn max_area_child(&self, id: NodeId) -> Option<NodeId> {
        let c = self.layout().max_child[id];
        (c != NONE).then_some(c as NodeId)
    }

    pub fn channel_sums(&self, id: NodeId) -> &[i64] {
        let at = 2 * id * self.channels;
        &self.channel_stats[at..at + self.channels]
    }

    pub fn channel_sumsq(&self, id: NodeId) -> &[i64] {
        let at = (2 * id + 1) * self.channels;
        &self.channel_stats[at..at + self.channels]
    }

    /// Highest ancestor-or-self of `id` whose level is `<= t`.
    pub fn ancestor_at(&self, id: NodeId, t: u32) -> NodeId {
        let mut n = id;
        while let Some(p) = self.nodes[n].parent() {
            if self.nodes[p].level > t {
                break;
            }
            n = p;
        }
        n
    }

    /// Component containing `pixel` at threshold `t`. In trees where a pixel
    /// only appears above level 0 (extremal trees) and `t` is below that
    /// level, the pixel's own node is returned.
    pub fn component_at_threshold(&self, pixel: usize, t: u32) -> Result<NodeId> {
        if t > self.max_level {
            return Err(Error::LevelOutOfRange {
                level: t,
                max: self.max_level,
            });
        }
        Ok(self.ancestor_at(self.pixel_leaf(pixel)?, t))
    }

    /// Follows the maximum-area child chain from `id` down to the first node
    /// whose level is `<= t`, stopping at a node without children.
    pub fn descend_max_area(&self, id: NodeId, t: i64) -> NodeId {
        let mut n = id;
        while self.nodes[n].level as i64 > t {
            match self.max_area_child(n) {
                Some(c) => n = c,
                None => break,
            }
        }
        n
    }

    /// Linear pixel indices (in this tree's image) of the node's region.
    pub fn node_region_pixels(&self, id: NodeId) -> Result<&[u32]> {
        let node = self.node(id)?;
        let l = self.layout();
        let start = l.range_start[id] as usize;
        Ok(&l.pixel_order[start..start + node.area as usize])
    }

    /// Same pixels as [`node_region_pixels`](Self::node_region_pixels), found
    /// by walking up from every leaf inside the node's bounding box. Cheaper
    /// when only a few small regions are needed from a fresh tree.
    pub fn node_pixels(&self, id: NodeId) -> Result<Vec<u32>> {
        let node = self.node(id)?;
        let b = node.bbox();
        let mut out = Vec::with_capacity(node.area as usize);
        for r in b.row0..b.row0 + b.height {
            for c in b.col0..b.col0 + b.width {
                let p = r * self.width + c;
                let mut x = self.pixel_node[p] as usize;
                // ancestors always have larger ids
                while x < id {
                    match self.nodes[x].parent() {
                        Some(q) => x = q,
                        None => break,
                    }
                }
                if x == id {
                    out.push(p as u32);
                }
            }
        }
        Ok(out)
    }

    pub fn debug_dump(&self) -> Vec<NodeDump> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(id, n)| NodeDump {
                id,
                parent: n.parent(),
                level: n.level,
                area: n.area,
                bbox: n.bbox(),
            })
            .collect()
    }
}

/// Builds the edge-based component tree with a counting sort over quantized
/// edge levels and a union-find sweep.
pub fn build_component_tree(image: &MultichannelImage, params: &TreeParams) -> Result<ComponentTree> {
    build_component_tree_with(image, params, &mut TreeScratch::default())
}

/// Same as [`build_component_tree`], but takes every working buffer from
/// `scratch` and leaves them there afterwards. Saves the allocation and
/// page-fault cost when trees of similar size are built repeatedly, as in
/// frame-by-frame tracking.
pub fn build_component_tree_with(
    image: &MultichannelImage,
    params: &TreeParams,
    scratch: &mut TreeScratch,
) -> Result<ComponentTree> {
    params.validate()?;
    let (w, h) = (image.width(), image.height());
    let n = w * h;
    if n >= (u32::MAX / 2) as usize {
        return Err(Error::InvalidImage("image too large".into()));
    }
    let bins = params.quantization_bins as usize;
    let quant = EdgeQuantizer::new(params.norm, params.quantization_bins, image.channels(), image.maxval());

    // edge code: pixel << 1 | vertical
    let mut codes = std::mem::take(&mut scratch.codes);
    let mut levels = std::mem::take(&mut scratch.levels);
    codes.clear();
    levels.clear();
    let mut counts = vec![0u32; bins + 1];
    let mut push = |p: usize, vertical: u32, l: u32| {
        codes.push(((p as u32) << 1) | vertical);
        levels.push(l);
        counts[l as usize + 1] += 1;
    };
    let ch = image.channels();
    let samples = image.samples();
    for r in 0..h {
        let row = &samples[r * w * ch..(r + 1) * w * ch];
        let below = (r + 1 < h).then(|| &samples[(r + 1) * w * ch..(r + 2) * w * ch]);
        for c in 0..w {
            let p = r * w + c;
            let here = &row[c * ch..(c + 1) * ch];
            if c + 1 < w {
                push(p, 0, quant.level(here, &row[(c + 1) * ch..(c + 2) * ch]));
            }
            if let Some(below) = below {
                push(p, 1, quant.level(here, &below[c * ch..(c + 1) * ch]));
            }
        }
    }
    for i in 1..counts.len() {
        counts[i] += counts[i - 1];
    }
    let mut sorted = refill(&mut scratch.sorted, codes.len(), 0u32);
    for (&code, &l) in codes.iter().zip(&levels) {
        let slot = &mut counts[l as usize];
        sorted[*slot as usize] = code;
        *slot += 1;
    }
    scratch.codes = codes;
    scratch.levels = levels;

    let mut builder = Builder::new(std::iter::repeat_n(0, n), scratch);
    let mut begin = 0usize;
    for level in 0..bins {
        let end = counts[level] as usize;
        for &code in &sorted[begin..end] {
            let a = code >> 1;
            let b = if code & 1 == 1 { a + w as u32 } else { a + 1 };
            builder.merge(a, b, level as u32);
        }
        begin = end;
    }
    scratch.sorted = sorted;
    Ok(builder.finish(image, params.quantization_bins - 1, scratch))
}

/// Working buffers for [`build_component_tree_with`]. Starts empty and
/// grows to fit the largest image seen.
#[derive(Default)]
pub struct TreeScratch {
    spare: Storage,
    codes: Vec<u32>,
    levels: Vec<u32>,
    sorted: Vec<u32>,
    uf: UnionFind,
    set_node: Vec<u32>,
    parent: Vec<u32>,
    level: Vec<u32>,
    canon: Vec<u32>,
    new_id: Vec<u32>,
    node_level: Vec<u32>,
    node_parent: Vec<u32>,
}

impl TreeScratch {
    /// Hands back a tree that is no longer needed so the next build can
    /// reuse its buffers.
    pub fn recycle(&mut self, tree: ComponentTree) {
        self.spare = Storage::from(tree);
    }
}

impl std::fmt::Debug for TreeScratch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("TreeScratch")
    }
}

/// Buffers taken from a discarded tree.
#[derive(Default)]
struct Storage {
    nodes: Vec<TreeNode>,
    channel_stats: Vec<i64>,
    roots: Vec<NodeId>,
    pixel_node: Vec<u32>,
}

impl From<ComponentTree> for Storage {
    fn from(t: ComponentTree) -> Self {
        Storage {
            nodes: t.nodes,
            channel_stats: t.channel_stats,
            roots: t.roots,
            pixel_node: t.pixel_node,
        }
    }
}

fn refill<T: Copy>(buf: &mut Vec<T>, len: usize, value: T) -> Vec<T> {
    let mut v = std::mem::take(buf);
    v.clear();
    v.resize(len, value);
    v
}

/// Union-find tree construction shared by edge trees and extremal trees.
///
/// Raw node `p < n` is pixel `p` at its activation level. A merge at level
/// `L` either attaches one component's node below the other's level-`L`
/// node, or creates a new level-`L` node. Same-level chains are collapsed in
/// [`Builder::finish`].
pub(crate) struct Builder {
    uf: UnionFind,
    set_node: Vec<u32>,
    parent: Vec<u32>,
    level: Vec<u32>,
}

impl Builder {
    /// One raw node per pixel, activated at the given levels.
    pub(crate) fn new(activation: impl Iterator<Item = u32>, scratch: &mut TreeScratch) -> Self {
        let mut level = std::mem::take(&mut scratch.level);
        level.clear();
        level.extend(activation);
        let n = level.len();
        // merges add at most n - 1 nodes
        level.reserve(n);
        let mut parent = refill(&mut scratch.parent, n, NONE);
        parent.reserve(n);
        let mut set_node = std::mem::take(&mut scratch.set_node);
        set_node.clear();
        set_node.extend(0..n as u32);
        let mut uf = std::mem::take(&mut scratch.uf);
        uf.reset(n);
        Builder {
            uf,
            set_node,
            parent,
            level,
        }
    }

    #[inline]
    pub(crate) fn merge(&mut self, a: u32, b: u32, level: u32) {
        let ra = self.uf.find(a);
        let rb = self.uf.find(b);
        if ra == rb {
            return;
        }
        let na = self.set_node[ra as usize];
        let nb = self.set_node[rb as usize];
        let merged = if self.level[na as usize] == level {
            self.parent[nb as usize] = na;
            na
        } else if self.level[nb as usize] == level {
            self.parent[na as usize] = nb;
            nb
        } else {
            let id = self.level.len() as u32;
            self.level.push(level);
            self.parent.push(NONE);
            self.parent[na as usize] = id;
            self.parent[nb as usize] = id;
            id
        };
        let root = self.uf.link(ra, rb);
        self.set_node[root as usize] = merged;
    }

    pub(crate) fn finish(self, image: &MultichannelImage, max_level: u32, scratch: &mut TreeScratch) -> ComponentTree {
        let Builder {
            uf,
            set_node,
            parent,
            level,
        } = self;
        scratch.uf = uf;
        scratch.set_node = set_node;
        let mut store = std::mem::take(&mut scratch.spare);
        let raw = level.len();
        let (w, h, channels) = (image.width(), image.height(), image.channels());
        let n = w * h;

        // canonical representative of each same-level chain
        let mut canon = refill(&mut scratch.canon, raw, NONE);
        let mut chain = Vec::new();
        for x in 0..raw {
            if canon[x] != NONE {
                continue;
            }
            let mut y = x;
            let rep = loop {
                if canon[y] != NONE {
                    break canon[y];
                }
                let p = parent[y];
                if p != NONE && level[p as usize] == level[y] {
                    chain.push(y);
                    y = p as usize;
                } else {
                    canon[y] = y as u32;
                    break y as u32;
                }
            };
            for &c in &chain {
                canon[c] = rep;
            }
            chain.clear();
        }

        // renumber kept nodes by (level, raw id)
        let mut counts = vec![0u32; max_level as usize + 2];
        for x in 0..raw {
            if canon[x] == x as u32 {
                counts[level[x] as usize + 1] += 1;
            }
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let kept = counts[max_level as usize + 1] as usize;
        let mut new_id = refill(&mut scratch.new_id, raw, NONE);
        let mut node_level = refill(&mut scratch.node_level, kept, 0u32);
        let mut node_parent = refill(&mut scratch.node_parent, kept, NONE);
        for x in 0..raw {
            if canon[x] == x as u32 {
                let slot = &mut counts[level[x] as usize];
                new_id[x] = *slot;
                node_level[*slot as usize] = level[x];
                *slot += 1;
            }
        }
        for x in 0..raw {
            if canon[x] == x as u32 && parent[x] != NONE {
                let p = canon[parent[x] as usize];
                node_parent[new_id[x] as usize] = new_id[p as usize];
            }
        }
        let mut pixel_node = std::mem::take(&mut store.pixel_node);
        pixel_node.clear();
        pixel_node.extend((0..n).map(|p| new_id[canon[p] as usize]));
        scratch.canon = canon;
        scratch.new_id = new_id;
        scratch.parent = parent;
        scratch.level = level;

        // accumulators: pixels into their nodes, then children into parents
        let mut nodes = std::mem::take(&mut store.nodes);
        nodes.clear();
        nodes.extend((0..kept).map(|id| TreeNode {
            level: node_level[id],
            min_pixel: u32::MAX,
            parent: node_parent[id],
            bounds: [u32::MAX, u32::MAX, 0, 0],
            area: 0,
            moments: Moments::default(),
        }));
        let stride = 2 * channels;
        let mut channel_stats = refill(&mut store.channel_stats, kept * stride, 0i64);
        let samples = image.samples();
        for r in 0..h {
            for c in 0..w {
                let p = r * w + c;
                let id = pixel_node[p] as usize;
                let node = &mut nodes[id];
                node.area += 1;
                node.moments.add_pixel(r as i64, c as i64);
                node.min_pixel = node.min_pixel.min(p as u32);
                let b = &mut node.bounds;
                b[0] = b[0].min(r as u32);
                b[1] = b[1].min(c as u32);
                b[2] = b[2].max(r as u32);
                b[3] = b[3].max(c as u32);
                let px = &samples[p * channels..(p + 1) * channels];
                let (sum, sumsq) = channel_stats[id * stride..(id + 1) * stride].split_at_mut(channels);
                for ((s, q), &v) in sum.iter_mut().zip(sumsq.iter_mut()).zip(px) {
                    *s += v as i64;
                    *q += v as i64 * v as i64;
                }
            }
        }
        for id in 0..kept {
            let p = node_parent[id];
            if p == NONE {
                continue;
            }
            let p = p as usize;
            debug_assert!(p > id);
            let (lo, hi) = nodes.split_at_mut(p);
            let (child, parent) = (&lo[id], &mut hi[0]);
            parent.area += child.area;
            parent.moments.add(&child.moments);
            parent.min_pixel = parent.min_pixel.min(child.min_pixel);
            let (b, pb) = (child.bounds, &mut parent.bounds);
            pb[0] = pb[0].min(b[0]);
            pb[1] = pb[1].min(b[1]);
            pb[2] = pb[2].max(b[2]);
            pb[3] = pb[3].max(b[3]);
            let (lo, hi) = channel_stats.split_at_mut(p * stride);
            for (acc, &v) in hi[..stride].iter_mut().zip(&lo[id * stride..(id + 1) * stride]) {
                *acc += v;
            }
        }
        let mut roots = std::mem::take(&mut store.roots);
        roots.clear();
        roots.extend((0..kept).filter(|&id| node_parent[id] == NONE));
        scratch.node_level = node_level;
        scratch.node_parent = node_parent;

        ComponentTree {
            width: w,
            height: h,
            channels,
            max_level,
            nodes,
            channel_stats,
            roots,
            pixel_node,
            layout: OnceLock::new(),
        }
    }
}
