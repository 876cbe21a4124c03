//! Bottom-up saliency of an object patch.
//!
//! Each patch is decomposed into an intensity channel and two color-opponent
//! channels. Every channel goes through a multi-scale center-surround
//! operator evaluated on an integral image: for each pixel the surround is
//! the mean of a square box clipped to the patch, and the on-center and
//! off-center responses are the two rectified halves of `center - surround`.
//! The per-channel feature maps are summed and max-normalized.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patch::GrayPatch;

/// Row-major scalar plane; used for channels and feature maps alike.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height} plane with {} values",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    fn same_shape(&self, other: &Plane) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Intensity and color-opponent channels, each in `[0, 255]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    pub intensity: Plane,
    pub red_green: Plane,
    pub blue_yellow: Plane,
}

impl ChannelSet {
    pub fn planes(&self) -> [&Plane; 3] {
        [&self.intensity, &self.red_green, &self.blue_yellow]
    }
}

/// `I = (R+G+B)/3`, `RG = R-G`, `BY = B-(R+G)/2`; opponent channels are
/// mapped affinely from `[-255, 255]` onto `[0, 255]`. Gray patches carry
/// no chroma, so their opponent channels are zero.
pub fn compute_channels(patch: &GrayPatch) -> Result<ChannelSet> {
    if patch.is_empty() {
        return Err(Error::EmptyPatch);
    }
    let (w, h) = (patch.width(), patch.height());
    match patch.color() {
        None => Ok(ChannelSet {
            intensity: Plane::new(w, h, patch.pixels().iter().map(|&p| p as f64).collect())?,
            red_green: Plane::zeros(w, h),
            blue_yellow: Plane::zeros(w, h),
        }),
        Some(c) => {
            let n = w * h;
            let mut intensity = Vec::with_capacity(n);
            let mut red_green = Vec::with_capacity(n);
            let mut blue_yellow = Vec::with_capacity(n);
            for i in 0..n {
                let (r, g, b) = (c.r[i] as f64, c.g[i] as f64, c.b[i] as f64);
                intensity.push((r + g + b) / 3.0);
                red_green.push((r - g + 255.0) / 2.0);
                blue_yellow.push((b - (r + g) / 2.0 + 255.0) / 2.0);
            }
            Ok(ChannelSet {
                intensity: Plane::new(w, h, intensity)?,
                red_green: Plane::new(w, h, red_green)?,
                blue_yellow: Plane::new(w, h, blue_yellow)?,
            })
        }
    }
}

/// Summed-area table with a zero top row and left column.
#[derive(Clone, Debug)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    sums: Vec<f64>,
}

impl IntegralImage {
    pub fn new(plane: &Plane) -> Self {
        let (w, h) = (plane.width, plane.height);
        let stride = w + 1;
        let mut sums = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += plane.data[y * w + x];
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self { width: w, height: h, sums }
    }

    /// Sum over the inclusive rectangle `[x0, x1] x [y0, y1]`.
    pub fn box_sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let s = self.width + 1;
        self.sums[(y1 + 1) * s + x1 + 1] - self.sums[y0 * s + x1 + 1] - self.sums[(y1 + 1) * s + x0]
            + self.sums[y0 * s + x0]
    }

    /// Mean of the `(2r+1)^2` box centered at `(x, y)`, clipped to the image.
    pub fn clipped_mean(&self, x: usize, y: usize, r: usize) -> f64 {
        let x0 = x.saturating_sub(r);
        let y0 = y.saturating_sub(r);
        let x1 = (x + r).min(self.width - 1);
        let y1 = (y + r).min(self.height - 1);
        let area = ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64;
        self.box_sum(x0, y0, x1, y1) / area
    }
}

/// Sum over surround scales of the on-center and off-center responses.
pub fn center_surround(channel: &Plane, surround_half_widths: &[usize]) -> Result<Plane> {
    if channel.data.is_empty() {
        return Err(Error::EmptyPatch);
    }
    if surround_half_widths.iter().any(|&s| s < 1) {
        return Err(Error::InvalidArgument("surround half-width must be >= 1".into()));
    }
    let integral = IntegralImage::new(channel);
    let mut out = Plane::zeros(channel.width, channel.height);
    for y in 0..channel.height {
        for x in 0..channel.width {
            let center = channel.at(x, y);
            let mut acc = 0.0;
            for &s in surround_half_widths {
                let surround = integral.clipped_mean(x, y, s);
                let on = (center - surround).max(0.0);
                let off = (surround - center).max(0.0);
                acc += on + off;
            }
            out.data[y * channel.width + x] = acc;
        }
    }
    Ok(out)
}

/// Per-pixel salience in `[0, 1]`; peak 1 unless the map is all zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    pub width: usize,
    pub height: usize,
    pub salience: Vec<f64>,
}

impl SaliencyMap {
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.salience[y * self.width + x]
    }
}

/// Unweighted pixel-wise sum, then division by the maximum.
pub fn fuse(maps: &[Plane]) -> Result<SaliencyMap> {
    let first = maps
        .first()
        .ok_or_else(|| Error::InvalidArgument("no feature maps to fuse".into()))?;
    if let Some(bad) = maps.iter().find(|m| !m.same_shape(first)) {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            first.width, first.height, bad.width, bad.height
        )));
    }
    let mut sum = vec![0.0; first.data.len()];
    for m in maps {
        for (acc, v) in sum.iter_mut().zip(&m.data) {
            *acc += v;
        }
    }
    let max = sum.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        for v in &mut sum {
            *v /= max;
        }
    }
    Ok(SaliencyMap { width: first.width, height: first.height, salience: sum })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankedPixel {
    pub x: usize,
    pub y: usize,
    pub salience: f64,
}

/// Most salient pixels first; ties in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedPixels {
    /// Dimensions of the map the pixels were ranked from.
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<RankedPixel>,
}

impl RankedPixels {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

fn rank_order(a: &RankedPixel, b: &RankedPixel) -> Ordering {
    b.salience
        .total_cmp(&a.salience)
        .then(a.y.cmp(&b.y))
        .then(a.x.cmp(&b.x))
}

/// The `l` most salient pixels of `map`, clamped to the pixel count.
pub fn rank_pixels(map: &SaliencyMap, l: usize) -> Result<RankedPixels> {
    if l < 1 {
        return Err(Error::InvalidArgument("l must be >= 1".into()));
    }
    let mut pixels: Vec<RankedPixel> = map
        .salience
        .iter()
        .enumerate()
        .map(|(i, &salience)| RankedPixel { x: i % map.width, y: i / map.width, salience })
        .collect();
    let keep = l.min(pixels.len());
    if keep < pixels.len() {
        pixels.select_nth_unstable_by(keep, rank_order);
        pixels.truncate(keep);
    }
    pixels.sort_unstable_by(rank_order);
    Ok(RankedPixels { width: map.width, height: map.height, pixels })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaliencyConfig {
    pub surround_half_widths: Vec<usize>,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        Self { surround_half_widths: vec![8, 16, 32] }
    }
}

impl SaliencyConfig {
    /// Half-widths clipped to half the smaller patch dimension (at least 1), deduplicated.
    pub fn effective_half_widths(&self, width: usize, height: usize) -> Vec<usize> {
        let cap = (width.min(height) / 2).max(1);
        let mut out: Vec<usize> = self.surround_half_widths.iter().map(|&s| s.clamp(1, cap)).collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Full pipeline: channels, center-surround per channel, fusion.
pub fn saliency_map(patch: &GrayPatch, cfg: &SaliencyConfig) -> Result<SaliencyMap> {
    let channels = compute_channels(patch)?;
    let scales = cfg.effective_half_widths(patch.width(), patch.height());
    let features = channels
        .planes()
        .into_iter()
        .map(|c| center_surround(c, &scales))
        .collect::<Result<Vec<_>>>()?;
    fuse(&features)
}
