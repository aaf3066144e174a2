//! Stability scores on component-tree branches and extraction of maximally
//! stable regions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{ComponentTree, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityParams {
    /// Level offset in quantized units.
    pub delta: u32,
    pub min_area: u64,
    /// Upper area bound as a fraction of the tree's image area.
    pub max_area_fraction: f64,
    /// Divide the growth by the region area instead of subtracting it.
    pub normalized_stability: bool,
}

impl Default for StabilityParams {
    fn default() -> Self {
        StabilityParams {
            delta: 5,
            min_area: 30,
            max_area_fraction: 0.5,
            normalized_stability: false,
        }
    }
}

impl StabilityParams {
    pub fn validate(&self) -> Result<()> {
        if self.delta < 1 {
            return Err(Error::InvalidParam("delta must be >= 1".into()));
        }
        if !(self.max_area_fraction > 0.0 && self.max_area_fraction <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "max_area_fraction must be in (0, 1], got {}",
                self.max_area_fraction
            )));
        }
        Ok(())
    }

    /// Whether a region of `area` pixels passes the area filters within a
    /// domain of `domain_area` pixels.
    pub fn accepts_area(&self, area: u64, domain_area: usize) -> bool {
        area >= self.min_area && area as f64 <= self.max_area_fraction * domain_area as f64
    }

    /// Stability score of a node under these parameters.
    pub fn score(&self, tree: &ComponentTree, id: NodeId) -> Result<f64> {
        let b = BranchSets::of(tree, id, self.delta)?;
        Ok(b.score(self.normalized_stability))
    }
}

/// Cardinalities of the grown, current and shrunk regions of a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BranchSets {
    pub grown: u64,
    pub current: u64,
    pub shrunk: u64,
}

impl BranchSets {
    /// `grown` is the component at level `i + delta` (clamped to the root);
    /// `shrunk` is the component at level `i - delta` reached along the
    /// maximum-area child chain, clamped to the last node of that chain.
    /// Here `i` is the node's own level.
    pub fn of(tree: &ComponentTree, id: NodeId, delta: u32) -> Result<BranchSets> {
        let level = tree.node(id)?.level;
        Ok(Self::at_level(tree, id, level, delta))
    }

    /// Same as [`BranchSets::of`] but at any level `i` of the node's span
    /// `[level, parent level)`, where the node itself is `R(i)`.
    pub fn at_level(tree: &ComponentTree, id: NodeId, i: u32, delta: u32) -> BranchSets {
        let up = i.saturating_add(delta).min(tree.max_level());
        let grown = tree.ancestor_at(id, up);
        let shrunk = tree.descend_max_area(id, i as i64 - delta as i64);
        BranchSets {
            grown: tree.nodes()[grown].area,
            current: tree.nodes()[id].area,
            shrunk: tree.nodes()[shrunk].area,
        }
    }

    /// Sets of `parent` evaluated on the branch that passes through `child`:
    /// the shrunk region is the component containing `child` at the
    /// parent's level minus `delta`, so the comparison between a node and
    /// its parent stays on one nested chain.
    pub fn of_parent_via(tree: &ComponentTree, parent: NodeId, child: NodeId, delta: u32) -> Result<BranchSets> {
        let p = tree.node(parent)?;
        let c = tree.node(child)?;
        if c.parent() != Some(parent) {
            return Err(Error::InvalidNode(child));
        }
        let up = p.level.saturating_add(delta).min(tree.max_level());
        let grown = tree.ancestor_at(parent, up);
        let down = p.level as i64 - delta as i64;
        let shrunk = if c.level as i64 <= down {
            tree.ancestor_at(child, down as u32)
        } else {
            tree.descend_max_area(child, down)
        };
        Ok(BranchSets {
            grown: tree.nodes()[grown].area,
            current: p.area,
            shrunk: tree.nodes()[shrunk].area,
        })
    }

    pub fn score(&self, normalized: bool) -> f64 {
        // shrunk is nested in grown, so |grown \ shrunk| = grown - shrunk
        let growth = self.grown as f64 - self.shrunk as f64;
        if normalized {
            growth / self.current as f64
        } else {
            growth - self.current as f64
        }
    }
}

/// `|R(i+delta) \ R(i-delta)| - |R(i)|` for one node.
pub fn stability(tree: &ComponentTree, id: NodeId, delta: u32) -> Result<i64> {
    if delta < 1 {
        return Err(Error::InvalidParam("delta must be >= 1".into()));
    }
    let b = BranchSets::of(tree, id, delta)?;
    Ok(b.grown as i64 - b.shrunk as i64 - b.current as i64)
}

/// `|R(i+delta) \ R(i-delta)| / |R(i)|` for one node.
pub fn normalized_stability(tree: &ComponentTree, id: NodeId, delta: u32) -> Result<f64> {
    if delta < 1 {
        return Err(Error::InvalidParam("delta must be >= 1".into()));
    }
    Ok(BranchSets::of(tree, id, delta)?.score(true))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MshrDetection {
    pub node: NodeId,
    /// Best score over the node's level span.
    pub stability: f64,
    pub level: u32,
    /// Level inside the span where that score is reached.
    pub stable_level: u32,
    pub area: u64,
}

/// Lowest score of a node over its level span `[level, parent level)`,
/// with the smallest level reaching it. The grown set only gets larger
/// with `i`, so the minimum sits at the span start or where the shrunk set
/// steps up, i.e. at `d + delta` for a level `d` on the max-area chain.
pub fn span_score(tree: &ComponentTree, id: NodeId, params: &StabilityParams) -> Result<(f64, u32)> {
    let node = tree.node(id)?;
    let (l, delta) = (node.level, params.delta);
    let end = node.parent().map_or(tree.max_level() as u64 + 1, |p| tree.nodes()[p].level as u64);
    let mut candidates = vec![l];
    let mut d = Some(id);
    while let Some(n) = d {
        let i = tree.nodes()[n].level as u64 + delta as u64;
        if i <= l as u64 {
            break;
        }
        if i < end {
            candidates.push(i as u32);
        }
        d = tree.max_area_child(n);
    }
    candidates.sort_unstable();
    let mut best = (f64::INFINITY, l);
    for i in candidates {
        let s = BranchSets::at_level(tree, id, i, delta).score(params.normalized_stability);
        if s < best.0 {
            best = (s, i);
        }
    }
    Ok(best)
}

/// Scores for every node of the tree.
pub fn all_scores(tree: &ComponentTree, params: &StabilityParams) -> Result<Vec<f64>> {
    params.validate()?;
    (0..tree.len()).map(|id| params.score(tree, id)).collect()
}

/// Nodes whose score is a local minimum of `s(i)` along their branch and
/// that pass the area filters, sorted by ascending score (then node id).
///
/// A node's score is its [`span_score`]. The neighbouring values on the
/// branch are the parent at its own level, scored on the branch through the
/// node ([`BranchSets::of_parent_via`]), and the maximum-area child at the
/// level just below the node's. Roots span the whole domain and are never
/// reported.
pub fn extract_mshr(tree: &ComponentTree, params: &StabilityParams) -> Result<Vec<MshrDetection>> {
    params.validate()?;
    let domain = tree.width() * tree.height();
    let mut out = Vec::new();
    for (id, node) in tree.nodes().iter().enumerate() {
        let Some(parent) = node.parent() else { continue };
        if !params.accepts_area(node.area, domain) {
            continue;
        }
        let (s, stable_level) = span_score(tree, id, params)?;
        let above = BranchSets::of_parent_via(tree, parent, id, params.delta)?.score(params.normalized_stability);
        if s > above {
            continue;
        }
        if let Some(child) = tree.max_area_child(id) {
            let below = BranchSets::at_level(tree, child, node.level - 1, params.delta)
                .score(params.normalized_stability);
            if s > below {
                continue;
            }
        }
        out.push(MshrDetection {
            node: id,
            stability: s,
            level: node.level,
            stable_level,
            area: node.area,
        });
    }
    out.sort_by(|a, b| a.stability.total_cmp(&b.stability).then(a.node.cmp(&b.node)));
    Ok(out)
}
