//! Binary PGM/PPM codecs, planar channel manifests and mask files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{MultichannelImage, SegmentationMask};

/// Planar N-channel image: one equally sized PGM per channel.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelManifest {
    pub channels: Vec<String>,
}

struct Pnm {
    width: usize,
    height: usize,
    channels: usize,
    maxval: u32,
    samples: Vec<i32>,
}

fn header_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Header {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn parse_pnm(path: &Path, data: &[u8]) -> Result<Pnm> {
    if data.len() < 2 || data[0] != b'P' {
        return Err(header_err(path, "missing P5/P6 magic"));
    }
    let channels = match data[1] {
        b'5' => 1,
        b'6' => 3,
        other => {
            return Err(header_err(
                path,
                format!("unsupported magic P{}", other as char),
            ))
        }
    };
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match data.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < data.len() && data[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(header_err(path, "truncated header")),
            }
        }
        let start = pos;
        while pos < data.len() && data[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(header_err(path, "expected a decimal number"));
        }
        *field = std::str::from_utf8(&data[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| header_err(path, "number out of range"))?;
    }
    match data.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(header_err(path, "missing whitespace after maxval")),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(header_err(path, "zero dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(header_err(path, format!("maxval {maxval} outside 1..=65535")));
    }
    let (width, height) = (width as usize, height as usize);
    let bytes_per_sample = if maxval > 255 { 2 } else { 1 };
    let count = width * height * channels;
    let payload = &data[pos..];
    if payload.len() < count * bytes_per_sample {
        return Err(header_err(
            path,
            format!(
                "raster has {} bytes, expected {}",
                payload.len(),
                count * bytes_per_sample
            ),
        ));
    }
    let samples: Vec<i32> = if bytes_per_sample == 1 {
        payload[..count].iter().map(|&b| b as i32).collect()
    } else {
        payload[..2 * count]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as i32)
            .collect()
    };
    if samples.iter().any(|&s| s as u32 > maxval) {
        return Err(header_err(path, "sample exceeds maxval"));
    }
    Ok(Pnm {
        width,
        height,
        channels,
        maxval,
        samples,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn is_manifest(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Loads a P5 PGM, a P6 PPM, or a JSON channel manifest of PGMs.
pub fn load_image(path: impl AsRef<Path>) -> Result<MultichannelImage> {
    let path = path.as_ref();
    if is_manifest(path) {
        return load_manifest(path);
    }
    let data = read_file(path)?;
    let pnm = parse_pnm(path, &data)?;
    MultichannelImage::new(pnm.width, pnm.height, pnm.channels, pnm.maxval, pnm.samples)
}

fn load_manifest(path: &Path) -> Result<MultichannelImage> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: ChannelManifest =
        serde_json::from_str(&text).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    if manifest.channels.is_empty() {
        return Err(Error::Manifest {
            path: path.to_path_buf(),
            reason: "no channels listed".into(),
        });
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut planes = Vec::with_capacity(manifest.channels.len());
    for name in &manifest.channels {
        let plane_path = base.join(name);
        let data = read_file(&plane_path)?;
        let pnm = parse_pnm(&plane_path, &data)?;
        if pnm.channels != 1 {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                reason: format!("{name} is not a single-channel PGM"),
            });
        }
        planes.push(MultichannelImage::new(
            pnm.width,
            pnm.height,
            1,
            pnm.maxval,
            pnm.samples,
        )?);
    }
    MultichannelImage::from_planes(&planes)
}

fn encode_pnm(width: usize, height: usize, channels: usize, maxval: u32, samples: &[i32]) -> Vec<u8> {
    let magic = if channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{width} {height}\n{maxval}\n").into_bytes();
    if maxval > 255 {
        for &s in samples {
            out.extend_from_slice(&(s as u16).to_be_bytes());
        }
    } else {
        out.extend(samples.iter().map(|&s| s as u8));
    }
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Saves 1-channel images as PGM and 3-channel images as PPM. A path ending
/// in `.json` writes a channel manifest plus one `<stem>_c<k>.pgm` per
/// channel, which works for any channel count.
pub fn save_image(image: &MultichannelImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_manifest(path) {
        return save_manifest(image, path);
    }
    if image.channels() != 1 && image.channels() != 3 {
        return Err(Error::InvalidParam(format!(
            "{} channels cannot be stored as PNM; use a .json manifest",
            image.channels()
        )));
    }
    write_file(
        path,
        &encode_pnm(
            image.width(),
            image.height(),
            image.channels(),
            image.maxval(),
            image.samples(),
        ),
    )
}

fn save_manifest(image: &MultichannelImage, path: &Path) -> Result<()> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image")
        .to_string();
    let base = path.parent().unwrap_or(Path::new("."));
    let mut names = Vec::with_capacity(image.channels());
    for ch in 0..image.channels() {
        let name = format!("{stem}_c{ch}.pgm");
        let plane = image.channel(ch);
        write_file(
            &base.join(&name),
            &encode_pnm(plane.width(), plane.height(), 1, plane.maxval(), plane.samples()),
        )?;
        names.push(name);
    }
    let manifest = ChannelManifest { channels: names };
    write_file(path, serde_json::to_string_pretty(&manifest)?.as_bytes())
}

/// Writes a mask as P5 with 0 = background and 255 = foreground.
pub fn save_mask(mask: &SegmentationMask, path: impl AsRef<Path>) -> Result<()> {
    let samples: Vec<i32> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    write_file(
        path.as_ref(),
        &encode_pnm(mask.width(), mask.height(), 1, 255, &samples),
    )
}

/// Loads a mask and reports how many pixels were neither 0 nor maxval.
/// Any nonzero value counts as foreground.
pub fn load_mask_checked(path: impl AsRef<Path>) -> Result<(SegmentationMask, usize)> {
    let path = path.as_ref();
    let data = read_file(path)?;
    let pnm = parse_pnm(path, &data)?;
    if pnm.channels != 1 {
        return Err(header_err(path, "mask must be a single-channel PGM"));
    }
    let nonbinary = pnm
        .samples
        .iter()
        .filter(|&&s| s != 0 && s as u32 != pnm.maxval)
        .count();
    let bits = pnm.samples.iter().map(|&s| s > 0).collect();
    Ok((SegmentationMask::from_bits(pnm.width, pnm.height, bits)?, nonbinary))
}

/// Loads a mask, logging a warning when non-binary values were present.
pub fn load_mask(path: impl AsRef<Path>) -> Result<SegmentationMask> {
    let path = path.as_ref();
    let (mask, nonbinary) = load_mask_checked(path)?;
    if nonbinary > 0 {
        log::warn!(
            "{}: {nonbinary} non-binary mask values treated as foreground",
            path.display()
        );
    }
    Ok(mask)
}

/// Ordered list of image files, resolved relative to the manifest.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceManifest {
    pub frames: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gt: Vec<String>,
    /// Suggested init rectangle `[r0, c0, h, w]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<[usize; 4]>,
    /// Suggested init slice for slice stacks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_slice: Option<usize>,
}

impl SequenceManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<(SequenceManifest, PathBuf)> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: SequenceManifest =
            serde_json::from_str(&text).map_err(|e| Error::Manifest {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok((manifest, base))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), serde_json::to_string_pretty(self)?.as_bytes())
    }
}
