//! Per-superpixel histogram features and the Hellinger distance between them.

use std::path::Path;

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::color::{rgb_to_hsv, rgb_to_lab, rgb_to_ycbcr};
use crate::error::{Error, Result};
use crate::superpixels::{Adjacency, SuperpixelMap};

pub const COLOR_NAMES: [&str; 11] = [
    "black", "blue", "brown", "gray", "green", "orange", "pink", "purple", "red", "white", "yellow",
];

const COLOR_NAME_ANCHORS: [[f64; 3]; 11] = [
    [0.0, 0.0, 0.0],
    [0.0, 0.0, 255.0],
    [139.0, 69.0, 19.0],
    [128.0, 128.0, 128.0],
    [0.0, 255.0, 0.0],
    [255.0, 165.0, 0.0],
    [255.0, 192.0, 203.0],
    [128.0, 0.0, 128.0],
    [255.0, 0.0, 0.0],
    [255.0, 255.0, 255.0],
    [255.0, 255.0, 0.0],
];

pub const COLOR_NAME_LUT_LEN: usize = 32 * 32 * 32;
pub const GRADIENT_DESCRIPTOR_DIMS: usize = 128;
const GRADIENT_PATCH: usize = 16;
const SIFT_CODEBOOK_SEED: u64 = 0x5EED_C0DE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorSpace {
    Rgb,
    Hsv,
    Lab,
    YCbCr,
}

impl ColorSpace {
    pub const ALL: [ColorSpace; 4] = [ColorSpace::Rgb, ColorSpace::Hsv, ColorSpace::Lab, ColorSpace::YCbCr];

    fn channels(self, p: [u8; 3]) -> [f64; 3] {
        let [r, g, b] = p;
        match self {
            ColorSpace::Rgb => [r as f64, g as f64, b as f64],
            ColorSpace::Hsv => {
                let (h, s, v) = rgb_to_hsv(r as f64, g as f64, b as f64);
                [h, s, v]
            }
            ColorSpace::Lab => rgb_to_lab(r, g, b),
            ColorSpace::YCbCr => rgb_to_ycbcr(r, g, b),
        }
    }

    fn ranges(self) -> [(f64, f64); 3] {
        match self {
            ColorSpace::Rgb | ColorSpace::YCbCr => [(0.0, 256.0); 3],
            ColorSpace::Hsv => [(0.0, 360.0), (0.0, 1.0), (0.0, 1.0)],
            ColorSpace::Lab => [(0.0, 100.0), (-128.0, 128.0), (-128.0, 128.0)],
        }
    }
}

#[inline]
fn uniform_bin(v: f64, (lo, hi): (f64, f64), bins: usize) -> usize {
    let t = ((v - lo) / (hi - lo) * bins as f64).floor();
    if t.is_nan() || t < 0.0 {
        0
    } else {
        (t as usize).min(bins - 1)
    }
}

fn l1_normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

/// Per-channel uniform histograms over the given spaces, concatenated and
/// L1-normalised as a whole.
pub fn channel_histogram(pixels: &[[u8; 3]], spaces: &[ColorSpace], bins: usize) -> Result<Vec<f64>> {
    if pixels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut h = vec![0.0; spaces.len() * 3 * bins];
    for &p in pixels {
        for (si, space) in spaces.iter().enumerate() {
            let ch = space.channels(p);
            for (c, range) in space.ranges().into_iter().enumerate() {
                h[(si * 3 + c) * bins + uniform_bin(ch[c], range, bins)] += 1.0;
            }
        }
    }
    l1_normalize(&mut h);
    Ok(h)
}

/// 16 bins per channel over RGB, HSV, LAB and YCbCr: 192 dimensions by default.
pub fn concat_color_histogram(pixels: &[[u8; 3]], bins: usize) -> Result<Vec<f64>> {
    channel_histogram(pixels, &ColorSpace::ALL, bins)
}

/// Pixel-to-color-name mapping, from a 32x32x32 LUT file or the nearest of
/// eleven prototype colours.
#[derive(Debug, Clone, Default)]
pub struct ColorNameTable {
    lut: Option<Vec<u8>>,
}

impl ColorNameTable {
    pub fn fallback() -> Self {
        Self { lut: None }
    }

    /// Reads a 32768-byte table indexed by `r/8 + 32*(g/8) + 1024*(b/8)`.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() != COLOR_NAME_LUT_LEN {
            return Err(Error::TruncatedFile {
                path: path.into(),
                expected: COLOR_NAME_LUT_LEN,
                found: bytes.len(),
            });
        }
        if let Some(&bad) = bytes.iter().find(|&&b| b as usize >= COLOR_NAMES.len()) {
            return Err(Error::Decode {
                path: path.into(),
                reason: format!("color-name index {bad} out of range"),
            });
        }
        Ok(Self { lut: Some(bytes) })
    }

    pub fn name_index(&self, p: [u8; 3]) -> usize {
        match &self.lut {
            Some(lut) => {
                let i = p[0] as usize / 8 + 32 * (p[1] as usize / 8) + 1024 * (p[2] as usize / 8);
                lut[i] as usize
            }
            None => nearest_anchor(p),
        }
    }
}

fn nearest_anchor(p: [u8; 3]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, a) in COLOR_NAME_ANCHORS.iter().enumerate() {
        let d: f64 = (0..3).map(|c| (p[c] as f64 - a[c]).powi(2)).sum();
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

pub fn color_name_histogram(pixels: &[[u8; 3]], table: &ColorNameTable) -> Result<Vec<f64>> {
    if pixels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut h = vec![0.0; COLOR_NAMES.len()];
    for &p in pixels {
        h[table.name_index(p)] += 1.0;
    }
    l1_normalize(&mut h);
    Ok(h)
}

/// A set of equal-length centroids for hard BoW assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    centroids: Vec<Vec<f64>>,
}

impl Dictionary {
    pub fn new(centroids: Vec<Vec<f64>>) -> Result<Self> {
        let dim = centroids.first().map(Vec::len).ok_or(Error::EmptyDictionary)?;
        if dim == 0 || centroids.iter().any(|c| c.len() != dim) {
            return Err(Error::InvalidConfig("dictionary centroids must share a nonzero length".into()));
        }
        Ok(Self { centroids })
    }

    /// JSON array of centroid arrays, or raw little-endian f32 values with
    /// `dim` values per centroid.
    pub fn load(path: &Path, dim: usize) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            let centroids = Vec::<Vec<f64>>::deserialize(&mut serde_json::Deserializer::from_slice(&bytes))?;
            let d = Self::new(centroids)?;
            if d.dim() != dim {
                return Err(Error::InvalidConfig(format!(
                    "{}: centroid length {} but descriptors have {dim}",
                    path.display(),
                    d.dim()
                )));
            }
            return Ok(d);
        }
        let stride = dim * 4;
        if bytes.is_empty() || bytes.len() % stride != 0 {
            return Err(Error::TruncatedFile {
                path: path.into(),
                expected: (bytes.len() / stride + 1) * stride,
                found: bytes.len(),
            });
        }
        let centroids = bytes
            .chunks_exact(stride)
            .map(|c| {
                c.chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                    .collect()
            })
            .collect();
        Self::new(centroids)
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].len()
    }

    /// Euclidean nearest centroid; ties go to the lowest index.
    pub fn nearest(&self, d: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, c) in self.centroids.iter().enumerate() {
            let dist: f64 = c.iter().zip(d).map(|(a, b)| (a - b) * (a - b)).sum();
            if dist < best.0 {
                best = (dist, i);
            }
        }
        best.1
    }

    /// Centres of a uniform `r x g x b` grid over RGB space.
    pub fn rgb_grid(r: usize, g: usize, b: usize) -> Self {
        let centre = |i: usize, n: usize| (i as f64 + 0.5) * 256.0 / n as f64;
        let mut centroids = Vec::with_capacity(r * g * b);
        for bi in 0..b {
            for gi in 0..g {
                for ri in 0..r {
                    centroids.push(vec![centre(ri, r), centre(gi, g), centre(bi, b)]);
                }
            }
        }
        Self { centroids }
    }

    /// Factorisation of `k` into an RGB grid as close to cubic as possible,
    /// with blue taking the largest factor (5x5x6 for 150).
    pub fn rgb_grid_for(k: usize) -> Self {
        let mut best = (usize::MAX, (k, 1, 1));
        for r in 1..=k {
            for g in r..=k / r {
                if k % (r * g) != 0 {
                    continue;
                }
                let b = k / (r * g);
                if b < g {
                    continue;
                }
                let spread = b - r;
                if spread < best.0 {
                    best = (spread, (r, g, b));
                }
            }
        }
        let (r, g, b) = best.1;
        Self::rgb_grid(r, g, b)
    }

    /// Deterministic pseudo-random codebook of non-negative unit vectors.
    pub fn seeded_gradient_codebook(k: usize, dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(SIFT_CODEBOOK_SEED);
        let centroids = (0..k)
            .map(|_| {
                let mut v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>().powi(3)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= n);
                v
            })
            .collect();
        Self { centroids }
    }
}

pub fn bow_histogram<D: AsRef<[f64]>>(descriptors: &[D], dictionary: &Dictionary) -> Result<Vec<f64>> {
    if dictionary.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    if descriptors.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut h = vec![0.0; dictionary.len()];
    for d in descriptors {
        h[dictionary.nearest(d.as_ref())] += 1.0;
    }
    l1_normalize(&mut h);
    Ok(h)
}

/// Per-pixel gradient orientation bin (8 bins) and magnitude of the luma channel.
struct GradientField {
    width: usize,
    height: usize,
    bin: Vec<u8>,
    mag: Vec<f64>,
}

impl GradientField {
    fn new(image: &RgbImage) -> Self {
        let (w, h) = (image.width() as usize, image.height() as usize);
        let luma: Vec<f64> = image
            .pixels()
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect();
        let at = |x: usize, y: usize| luma[y * w + x];
        let mut bin = vec![0u8; w * h];
        let mut mag = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let gx = at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y);
                let gy = at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1));
                let m = gx.hypot(gy);
                let a = gy.atan2(gx).rem_euclid(std::f64::consts::TAU);
                bin[y * w + x] = ((a / std::f64::consts::TAU * 8.0) as usize).min(7) as u8;
                mag[y * w + x] = m;
            }
        }
        Self { width: w, height: h, bin, mag }
    }

    /// 4x4 cells x 8 orientations over the 16x16 patch centred at `(cx, cy)`,
    /// clipped to the image, L2-normalised.
    fn descriptor(&self, cx: usize, cy: usize) -> Vec<f64> {
        let mut d = vec![0.0; GRADIENT_DESCRIPTOR_DIMS];
        let half = GRADIENT_PATCH as i64 / 2;
        let cell = GRADIENT_PATCH as i64 / 4;
        for dy in 0..GRADIENT_PATCH as i64 {
            let y = cy as i64 - half + dy;
            if y < 0 || y >= self.height as i64 {
                continue;
            }
            for dx in 0..GRADIENT_PATCH as i64 {
                let x = cx as i64 - half + dx;
                if x < 0 || x >= self.width as i64 {
                    continue;
                }
                let i = y as usize * self.width + x as usize;
                let c = ((dy / cell) * 4 + dx / cell) as usize;
                d[c * 8 + self.bin[i] as usize] += self.mag[i];
            }
        }
        let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            d.iter_mut().for_each(|x| *x /= n);
        }
        d
    }
}

/// The four-block feature pool of one superpixel.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeHistogram {
    pub bow_sift: Vec<f64>,
    pub bow_rgb: Vec<f64>,
    pub color_names: Vec<f64>,
    pub color_concat: Vec<f64>,
}

impl NodeHistogram {
    pub fn blocks(&self) -> [&[f64]; 4] {
        [&self.bow_sift, &self.bow_rgb, &self.color_names, &self.color_concat]
    }

    fn blocks_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.bow_sift, &mut self.bow_rgb, &mut self.color_names, &mut self.color_concat]
    }

    pub fn layout(&self) -> Vec<usize> {
        self.blocks().iter().map(|b| b.len()).collect()
    }

    pub fn zeros_like(&self) -> Self {
        let z = |v: &Vec<f64>| vec![0.0; v.len()];
        Self {
            bow_sift: z(&self.bow_sift),
            bow_rgb: z(&self.bow_rgb),
            color_names: z(&self.color_names),
            color_concat: z(&self.color_concat),
        }
    }

    /// `self += w * other`, block by block.
    pub fn add_scaled(&mut self, other: &NodeHistogram, w: f64) -> Result<()> {
        if self.layout() != other.layout() {
            return Err(Error::BlockMismatch(self.layout(), other.layout()));
        }
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            dst.iter_mut().zip(src).for_each(|(a, b)| *a += w * b);
        }
        Ok(())
    }

    pub fn normalize(&mut self) {
        for b in self.blocks_mut() {
            l1_normalize(b);
        }
    }
}

/// Mean over blocks of the Hellinger distance `sqrt(1 - BC)`.
pub fn histogram_distance(a: &NodeHistogram, b: &NodeHistogram) -> Result<f64> {
    if a.layout() != b.layout() {
        return Err(Error::BlockMismatch(a.layout(), b.layout()));
    }
    let blocks = a.blocks();
    let total: f64 = blocks
        .iter()
        .zip(b.blocks())
        .map(|(x, y)| hellinger(x, y))
        .sum();
    Ok(total / blocks.len() as f64)
}

pub fn hellinger(a: &[f64], b: &[f64]) -> f64 {
    let bc: f64 = a.iter().zip(b).map(|(x, y)| (x * y).sqrt()).sum();
    (1.0 - bc).max(0.0).sqrt()
}

/// `H' = normalize(H_p + sum_q w_q H_q)` with `w_q = exp(-d_q^2 / 2 sigma^2)` and
/// `sigma` the mean neighbour distance.
pub fn gaussian_weighting(h_p: &NodeHistogram, neighbors: &[(&NodeHistogram, f64)]) -> Result<NodeHistogram> {
    let mut out = h_p.clone();
    if neighbors.is_empty() {
        return Ok(out);
    }
    let sigma = neighbors.iter().map(|(_, d)| d).sum::<f64>() / neighbors.len() as f64;
    for (h, d) in neighbors {
        let w = if sigma > 0.0 {
            (-d * d / (2.0 * sigma * sigma)).exp()
        } else {
            1.0
        };
        out.add_scaled(h, w)?;
    }
    out.normalize();
    Ok(out)
}

/// Dictionaries and tables used to build node histograms.
#[derive(Debug, Clone)]
pub struct DescriptorContext {
    pub sift: Dictionary,
    pub rgb: Dictionary,
    pub color_names: ColorNameTable,
    pub color_bins: usize,
    pub stride: usize,
}

impl DescriptorContext {
    pub fn fallback(sift_dims: usize, rgb_dims: usize, color_bins: usize, stride: usize) -> Self {
        Self {
            sift: Dictionary::seeded_gradient_codebook(sift_dims, GRADIENT_DESCRIPTOR_DIMS),
            rgb: Dictionary::rgb_grid_for(rgb_dims),
            color_names: ColorNameTable::fallback(),
            color_bins,
            stride: stride.max(1),
        }
    }
}

/// Raw (unweighted) feature pools for every superpixel of a frame. Dense
/// gradient keypoints lie on a `stride` grid; a superpixel that owns no
/// keypoint uses the one at its centroid.
pub fn node_histograms(image: &RgbImage, sp: &SuperpixelMap, ctx: &DescriptorContext) -> Result<Vec<NodeHistogram>> {
    let dims = (image.width() as usize, image.height() as usize);
    if sp.dims() != dims {
        return Err(Error::DimensionMismatch {
            expected: dims,
            found: sp.dims(),
        });
    }
    let n = sp.len();
    let mut pixels: Vec<Vec<[u8; 3]>> = vec![Vec::new(); n];
    for (i, p) in image.pixels().enumerate() {
        pixels[sp.labels.as_slice()[i] as usize].push(p.0);
    }
    let grad = GradientField::new(image);
    let mut words: Vec<Vec<f64>> = vec![vec![0.0; ctx.sift.len()]; n];
    let off = ctx.stride / 2;
    for y in (off..dims.1).step_by(ctx.stride) {
        for x in (off..dims.0).step_by(ctx.stride) {
            let l = sp.label(x, y);
            words[l][ctx.sift.nearest(&grad.descriptor(x, y))] += 1.0;
        }
    }
    let mut out = Vec::with_capacity(n);
    for (l, px) in pixels.iter().enumerate() {
        let mut bow_sift = std::mem::take(&mut words[l]);
        if bow_sift.iter().all(|&c| c == 0.0) {
            let (cx, cy) = nearest_member(sp, l);
            bow_sift[ctx.sift.nearest(&grad.descriptor(cx, cy))] = 1.0;
        }
        l1_normalize(&mut bow_sift);
        let rgb: Vec<[f64; 3]> = px.iter().map(|p| [p[0] as f64, p[1] as f64, p[2] as f64]).collect();
        out.push(NodeHistogram {
            bow_sift,
            bow_rgb: bow_histogram(&rgb, &ctx.rgb)?,
            color_names: color_name_histogram(px, &ctx.color_names)?,
            color_concat: concat_color_histogram(px, ctx.color_bins)?,
        });
    }
    Ok(out)
}

/// Member pixel of superpixel `l` closest to its centroid.
fn nearest_member(sp: &SuperpixelMap, l: usize) -> (usize, usize) {
    let (cx, cy) = sp.stats[l].centroid;
    let (x0, y0, x1, y1) = sp.stats[l].bbox;
    let mut best = (f64::INFINITY, (x0, y0));
    for y in y0..=y1 {
        for x in x0..=x1 {
            if sp.label(x, y) == l {
                let d = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                if d < best.0 {
                    best = (d, (x, y));
                }
            }
        }
    }
    best.1
}

/// Smooths each node's pool with its `k` nearest spatially adjacent
/// superpixels by centroid distance (ties by label).
pub fn weighted_node_histograms(raw: &[NodeHistogram], sp: &SuperpixelMap, adj: &Adjacency, k: usize) -> Result<Vec<NodeHistogram>> {
    (0..raw.len())
        .map(|p| {
            let (px, py) = sp.stats[p].centroid;
            let mut cand: Vec<(f64, usize)> = adj.neighbors[p]
                .iter()
                .map(|&q| {
                    let (qx, qy) = sp.stats[q].centroid;
                    ((px - qx).hypot(py - qy), q)
                })
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.truncate(k);
            let nb: Vec<(&NodeHistogram, f64)> = cand.iter().map(|&(d, q)| (&raw[q], d)).collect();
            gaussian_weighting(&raw[p], &nb)
        })
        .collect()
}
