//! Overlap scoring: IoU, the best achievable axis-aligned box, and per-frame
//! overlap curves.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Rect, SegmentationMask};
use crate::tracker::median;

fn check_dims(a: &SegmentationMask, b: &SegmentationMask) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// `|a ∩ b| / |a ∪ b|`, and 0 when both masks are empty.
pub fn iou(a: &SegmentationMask, b: &SegmentationMask) -> Result<f64> {
    check_dims(a, b)?;
    let (mut inter, mut union) = (0u64, 0u64);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x && y) as u64;
        union += (x || y) as u64;
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BestBoxMode {
    Exhaustive,
    Heuristic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BestBoxResult {
    pub rect: Rect,
    pub iou: f64,
    /// True when the result is the proven global optimum.
    pub exact: bool,
}

/// Summed-area table of a mask restricted to a window.
struct Integral {
    stride: usize,
    table: Vec<u32>,
}

impl Integral {
    fn new(mask: &SegmentationMask, win: Rect) -> Self {
        let stride = win.width + 1;
        let mut table = vec![0u32; (win.height + 1) * stride];
        for r in 0..win.height {
            let mut row = 0u32;
            for c in 0..win.width {
                row += mask.get(win.row0 + r, win.col0 + c) as u32;
                table[(r + 1) * stride + c + 1] = table[r * stride + c + 1] + row;
            }
        }
        Integral { stride, table }
    }

    /// Foreground count in window-local rows `[r0, r1)` and cols `[c0, c1)`.
    #[inline]
    fn sum(&self, r0: usize, c0: usize, r1: usize, c1: usize) -> u64 {
        let s = self.stride;
        (self.table[r1 * s + c1] + self.table[r0 * s + c0]) as u64
            - (self.table[r0 * s + c1] + self.table[r1 * s + c0]) as u64
    }
}

/// Box as window-local half-open edges `(top, left, bottom, right)`.
type Edges = (usize, usize, usize, usize);

/// Exact comparison of `i1/u1 > i2/u2`.
#[inline]
fn ratio_gt(i1: u64, u1: u64, i2: u64, u2: u64) -> bool {
    i1 as u128 * u2 as u128 > i2 as u128 * u1 as u128
}

fn overlap(ii: &Integral, total: u64, e: Edges) -> (u64, u64) {
    let inter = ii.sum(e.0, e.1, e.2, e.3);
    let area = ((e.2 - e.0) * (e.3 - e.1)) as u64;
    (inter, total + area - inter)
}

/// Axis-aligned box maximizing IoU with `gt`.
///
/// Exhaustive mode enumerates every integer box inside the tight bounding
/// box of `gt`, which contains the optimum: clipping any box to the tight
/// bounding box keeps the intersection and never grows the union. Heuristic
/// mode runs coordinate ascent with exact line searches over each box edge,
/// restarted from the tight box and from boxes with sides moved by 25%.
pub fn best_box(gt: &SegmentationMask, mode: BestBoxMode) -> Result<BestBoxResult> {
    let win = gt.bbox().ok_or(Error::EmptyMask)?;
    let ii = Integral::new(gt, win);
    let total = gt.count() as u64;
    let (h, w) = (win.height, win.width);

    let (best, exact) = match mode {
        BestBoxMode::Exhaustive => {
            let mut best: Edges = (0, 0, h, w);
            let (mut bi, mut bu) = overlap(&ii, total, best);
            for top in 0..h {
                for bottom in top + 1..=h {
                    for left in 0..w {
                        for right in left + 1..=w {
                            let e = (top, left, bottom, right);
                            let (i, u) = overlap(&ii, total, e);
                            if ratio_gt(i, u, bi, bu) {
                                best = e;
                                bi = i;
                                bu = u;
                            }
                        }
                    }
                }
            }
            (best, true)
        }
        BestBoxMode::Heuristic => (heuristic_box(&ii, total, h, w), false),
    };
    let (i, u) = overlap(&ii, total, best);
    Ok(BestBoxResult {
        rect: Rect::new(
            win.row0 + best.0,
            win.col0 + best.1,
            best.2 - best.0,
            best.3 - best.1,
        ),
        iou: i as f64 / u as f64,
        exact,
    })
}

fn heuristic_box(ii: &Integral, total: u64, h: usize, w: usize) -> Edges {
    let shift = |len: usize| (len as f64 * 0.25).round() as usize;
    let (dh, dw) = (shift(h), shift(w));
    let mut starts: Vec<Edges> = vec![(0, 0, h, w)];
    for (st, sl, sb, sr) in [
        (dh, 0, h, w),
        (0, dw, h, w),
        (0, 0, h - dh, w),
        (0, 0, h, w - dw),
        (dh, dw, h, w),
        (0, 0, h - dh, w - dw),
        (dh / 2, dw / 2, h - dh / 2, w - dw / 2),
        (dh, dw, h - dh, w - dw),
    ] {
        if st < sb && sl < sr {
            starts.push((st, sl, sb, sr));
        }
    }

    let mut best = starts[0];
    let (mut bi, mut bu) = overlap(ii, total, best);
    for start in starts {
        let mut e = start;
        let (mut ei, mut eu) = overlap(ii, total, e);
        loop {
            let mut improved = false;
            for coord in 0..4 {
                let range = match coord {
                    0 => 0..e.2,
                    1 => 0..e.3,
                    2 => e.0 + 1..h + 1,
                    _ => e.1 + 1..w + 1,
                };
                for v in range {
                    let mut cand = e;
                    match coord {
                        0 => cand.0 = v,
                        1 => cand.1 = v,
                        2 => cand.2 = v,
                        _ => cand.3 = v,
                    }
                    let (i, u) = overlap(ii, total, cand);
                    if ratio_gt(i, u, ei, eu) {
                        e = cand;
                        ei = i;
                        eu = u;
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        if ratio_gt(ei, eu, bi, bu) {
            best = e;
            bi = ei;
            bu = eu;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OverlapRecord {
    pub frame: usize,
    pub iou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverlapCurve {
    pub records: Vec<OverlapRecord>,
    pub mean: f64,
    pub median: f64,
}

impl OverlapCurve {
    /// Two whitespace-separated columns: frame index and IoU.
    pub fn to_data(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            let _ = writeln!(s, "{} {:.6}", r.frame, r.iou);
        }
        s
    }

    pub fn write_data(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_data()).map_err(|e| Error::io(path, e))
    }
}

/// IoU of each predicted mask against its ground truth.
pub fn overlap_curve(pred: &[SegmentationMask], gt: &[SegmentationMask]) -> Result<OverlapCurve> {
    if pred.len() != gt.len() {
        return Err(Error::CountMismatch(pred.len(), gt.len()));
    }
    let records = pred
        .iter()
        .zip(gt)
        .enumerate()
        .map(|(frame, (p, g))| Ok(OverlapRecord { frame, iou: iou(p, g)? }))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = records.iter().map(|r| r.iou).collect();
    let mean = if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    };
    Ok(OverlapCurve {
        mean,
        median: median(&values),
        records,
    })
}
