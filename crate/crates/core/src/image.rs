//! Multichannel images, binary masks and axis-aligned rectangles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned pixel rectangle. `row0`/`col0` are inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub row0: usize,
    pub col0: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn new(row0: usize, col0: usize, height: usize, width: usize) -> Self {
        Rect {
            row0,
            col0,
            height,
            width,
        }
    }

    /// Intersects a signed rectangle with a `frame_height` x `frame_width`
    /// frame. Returns `None` when the intersection is empty.
    pub fn clamped(
        row0: i64,
        col0: i64,
        height: i64,
        width: i64,
        frame_height: usize,
        frame_width: usize,
    ) -> Option<Rect> {
        let r0 = row0.max(0);
        let c0 = col0.max(0);
        let r1 = (row0 + height).min(frame_height as i64);
        let c1 = (col0 + width).min(frame_width as i64);
        if r1 <= r0 || c1 <= c0 {
            return None;
        }
        Some(Rect::new(
            r0 as usize,
            c0 as usize,
            (r1 - r0) as usize,
            (c1 - c0) as usize,
        ))
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    /// Exclusive end row.
    pub fn row_end(&self) -> usize {
        self.row0 + self.height
    }

    /// Exclusive end column.
    pub fn col_end(&self) -> usize {
        self.col0 + self.width
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row0 && row < self.row_end() && col >= self.col0 && col < self.col_end()
    }

    /// Geometric center in continuous pixel coordinates.
    pub fn center(&self) -> (f64, f64) {
        (
            self.row0 as f64 + self.height as f64 / 2.0,
            self.col0 as f64 + self.width as f64 / 2.0,
        )
    }

    /// Shifts the rectangle by a non-negative offset.
    pub fn translated(&self, drow: usize, dcol: usize) -> Rect {
        Rect::new(self.row0 + drow, self.col0 + dcol, self.height, self.width)
    }

    /// Parses `r0,c0,h,w`.
    pub fn parse(text: &str) -> Result<Rect> {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::InvalidParam(format!(
                "rectangle must be r0,c0,h,w, got {text:?}"
            )));
        }
        let mut v = [0usize; 4];
        for (slot, part) in v.iter_mut().zip(&parts) {
            *slot = part
                .parse()
                .map_err(|_| Error::InvalidParam(format!("bad rectangle component {part:?}")))?;
        }
        if v[2] == 0 || v[3] == 0 {
            return Err(Error::InvalidParam("rectangle height and width must be >= 1".into()));
        }
        Ok(Rect::new(v[0], v[1], v[2], v[3]))
    }
}

/// Row-major interleaved image with `channels` samples per pixel.
///
/// Samples are stored as `i32` regardless of the 8/16-bit source so that
/// moment and channel accumulation never overflows the sample type. `maxval`
/// is the nominal maximum sample value and scales edge magnitudes. `origin`
/// is the position of pixel (0, 0) in the frame the image was cropped from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultichannelImage {
    width: usize,
    height: usize,
    channels: usize,
    maxval: u32,
    origin: (usize, usize),
    samples: Vec<i32>,
}

impl MultichannelImage {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        maxval: u32,
        samples: Vec<i32>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}x{channels}"
            )));
        }
        if maxval == 0 || maxval > 65535 {
            return Err(Error::InvalidImage(format!("maxval {maxval} outside 1..=65535")));
        }
        if samples.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "expected {} samples, got {}",
                width * height * channels,
                samples.len()
            )));
        }
        if let Some(bad) = samples.iter().find(|&&s| s < 0 || s as u32 > maxval) {
            return Err(Error::InvalidImage(format!(
                "sample {bad} outside [0, {maxval}]"
            )));
        }
        Ok(MultichannelImage {
            width,
            height,
            channels,
            maxval,
            origin: (0, 0),
            samples,
        })
    }

    /// 8-bit image with every pixel set to `value`.
    pub fn filled(width: usize, height: usize, value: &[i32]) -> Result<Self> {
        let samples = value
            .iter()
            .copied()
            .cycle()
            .take(width * height * value.len())
            .collect();
        Self::new(width, height, value.len(), 255, samples)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn maxval(&self) -> u32 {
        self.maxval
    }

    pub fn origin(&self) -> (usize, usize) {
        self.origin
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn samples(&self) -> &[i32] {
        &self.samples
    }

    /// Channel vector of the pixel at linear index `index`.
    #[inline]
    pub fn pixel_at(&self, index: usize) -> &[i32] {
        &self.samples[index * self.channels..(index + 1) * self.channels]
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[i32] {
        self.pixel_at(row * self.width + col)
    }

    /// Overwrites one pixel. Values are clamped to `[0, maxval]`.
    pub fn set_pixel(&mut self, row: usize, col: usize, value: &[i32]) {
        debug_assert_eq!(value.len(), self.channels);
        let start = (row * self.width + col) * self.channels;
        for (dst, &v) in self.samples[start..start + self.channels].iter_mut().zip(value) {
            *dst = v.clamp(0, self.maxval as i32);
        }
    }

    pub fn full_rect(&self) -> Rect {
        Rect::new(0, 0, self.height, self.width)
    }

    /// One channel as its own single-channel image.
    pub fn channel(&self, ch: usize) -> MultichannelImage {
        let samples = self
            .samples
            .iter()
            .skip(ch)
            .step_by(self.channels)
            .copied()
            .collect();
        MultichannelImage {
            width: self.width,
            height: self.height,
            channels: 1,
            maxval: self.maxval,
            origin: self.origin,
            samples,
        }
    }

    /// Stacks equally sized single-channel images into one planar-sourced
    /// multichannel image.
    pub fn from_planes(planes: &[MultichannelImage]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::InvalidImage("no channel planes".into()))?;
        let (w, h) = (first.width, first.height);
        for p in planes {
            if p.width != w || p.height != h {
                return Err(Error::ChannelDimensions(format!(
                    "{}x{} vs {}x{}",
                    w, h, p.width, p.height
                )));
            }
        }
        let channels: usize = planes.iter().map(|p| p.channels).sum();
        let maxval = planes.iter().map(|p| p.maxval).max().unwrap_or(255);
        let mut samples = Vec::with_capacity(w * h * channels);
        for i in 0..w * h {
            for p in planes {
                samples.extend_from_slice(p.pixel_at(i));
            }
        }
        Self::new(w, h, channels, maxval, samples)
    }

    /// Sub-image covering `r` after clamping to the image bounds. The result
    /// records its position in the source frame through `origin`.
    pub fn crop(&self, r: Rect) -> Result<MultichannelImage> {
        let r = Rect::clamped(
            r.row0 as i64,
            r.col0 as i64,
            r.height as i64,
            r.width as i64,
            self.height,
            self.width,
        )
        .ok_or(Error::EmptyIntersection)?;
        let mut samples = Vec::with_capacity(r.area() * self.channels);
        for row in r.row0..r.row_end() {
            let start = (row * self.width + r.col0) * self.channels;
            samples.extend_from_slice(&self.samples[start..start + r.width * self.channels]);
        }
        Ok(MultichannelImage {
            width: r.width,
            height: r.height,
            channels: self.channels,
            maxval: self.maxval,
            origin: (self.origin.0 + r.row0, self.origin.1 + r.col0),
            samples,
        })
    }
}

/// Free-function form of [`MultichannelImage::crop`].
pub fn crop(image: &MultichannelImage, r: Rect) -> Result<MultichannelImage> {
    image.crop(r)
}

/// Binary by-pixel segmentation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentationMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl SegmentationMask {
    pub fn new(width: usize, height: usize) -> Self {
        SegmentationMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} bits for a {width}x{height} mask",
                bits.len()
            )));
        }
        Ok(SegmentationMask {
            width,
            height,
            bits,
        })
    }

    /// Mask with the given linear pixel indices set.
    pub fn from_indices(
        width: usize,
        height: usize,
        indices: impl IntoIterator<Item = usize>,
    ) -> Self {
        let mut mask = Self::new(width, height);
        for i in indices {
            mask.bits[i] = true;
        }
        mask
    }

    /// Maps pixels given as linear indices inside `region` (a crop of the
    /// frame at `region.origin()`) onto a full-frame mask.
    pub fn from_region_pixels(
        frame_width: usize,
        frame_height: usize,
        region: &MultichannelImage,
        pixels: &[u32],
    ) -> Self {
        let (r0, c0) = region.origin();
        let w = region.width();
        let mut mask = Self::new(frame_width, frame_height);
        for &p in pixels {
            let p = p as usize;
            let (row, col) = (r0 + p / w, c0 + p % w);
            if row < frame_height && col < frame_width {
                mask.bits[row * frame_width + col] = true;
            }
        }
        mask
    }

    /// Rectangle mask.
    pub fn from_rect(width: usize, height: usize, r: Rect) -> Self {
        let mut mask = Self::new(width, height);
        for row in r.row0..r.row_end().min(height) {
            for col in r.col0..r.col_end().min(width) {
                mask.bits[row * width + col] = true;
            }
        }
        mask
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Linear indices of foreground pixels in ascending order.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    /// Tight bounding box of the foreground, `None` for an empty mask.
    pub fn bbox(&self) -> Option<Rect> {
        let (mut r0, mut c0, mut r1, mut c1) = (usize::MAX, usize::MAX, 0, 0);
        for i in self.indices() {
            let (r, c) = (i / self.width, i % self.width);
            r0 = r0.min(r);
            c0 = c0.min(c);
            r1 = r1.max(r);
            c1 = c1.max(c);
        }
        (r0 != usize::MAX).then(|| Rect::new(r0, c0, r1 - r0 + 1, c1 - c0 + 1))
    }

    /// Rotates the mask by 90 degrees clockwise.
    pub fn rotate90(&self) -> SegmentationMask {
        let (w, h) = (self.width, self.height);
        let mut out = SegmentationMask::new(h, w);
        for r in 0..h {
            for c in 0..w {
                if self.get(r, c) {
                    out.set(c, h - 1 - r, true);
                }
            }
        }
        out
    }
}
