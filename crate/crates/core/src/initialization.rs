//! Adaptive binarisation of ICE maps into initial labels, occlusion-episode
//! detection from per-frame blob counts, and coarse object-ID tracking with
//! re-assignment inside episodes by bipartite matching.

use image::RgbImage;
use log::warn;
use serde::Serialize;

use crate::assignment::hungarian_match;
use crate::color::rgb_to_lab;
use crate::components::{label_components8, remove_small, Components};
use crate::descriptors::{channel_histogram, hellinger, ColorSpace};
use crate::error::{Error, Result};
use crate::grid::{Grid, Mask, ScalarMap};
use crate::superpixels::SuperpixelMap;
use crate::trimap::multilevel_otsu;

pub const EDGE_HIST_BINS: usize = 16;

/// `0.5 * (mean(M) + otsu(M))` with single-threshold Otsu on 256 bins. A
/// flat map returns its constant value.
pub fn adaptive_threshold(m: &ScalarMap) -> f64 {
    let otsu = multilevel_otsu(m.as_slice(), 1);
    if otsu.is_degenerate() {
        return otsu.values[0];
    }
    0.5 * (m.mean() + otsu.values[0])
}

/// Smallest blob kept for a frame of `pixels` pixels.
pub fn min_blob_area(pixels: usize, fraction: f64) -> usize {
    (fraction * pixels as f64).ceil() as usize
}

/// `M >= t` pointwise, then blobs under `min_area` removed. A flat map is
/// all background.
pub fn binarize(m: &ScalarMap, t: f64, min_area: usize) -> Mask {
    let (lo, hi) = m.min_max();
    if !(hi > lo) {
        return Mask::new(m.width(), m.height());
    }
    remove_small(&m.map(|&v| v >= t), min_area)
}

#[derive(Debug, Clone)]
pub struct InitialLabels {
    pub x: Vec<Mask>,
    pub t: Vec<f64>,
    pub blob_count: Vec<usize>,
    pub blobs: Vec<Components>,
}

impl InitialLabels {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

pub fn initialize_frame(m: &ScalarMap, min_area_fraction: f64) -> (Mask, f64, Components) {
    let t = adaptive_threshold(m);
    let x = binarize(m, t, min_blob_area(m.len(), min_area_fraction));
    let c = label_components8(&x);
    (x, t, c)
}

pub fn collect_initial_labels(frames: Vec<(Mask, f64, Components)>) -> InitialLabels {
    let mut out = InitialLabels {
        x: Vec::with_capacity(frames.len()),
        t: Vec::with_capacity(frames.len()),
        blob_count: Vec::with_capacity(frames.len()),
        blobs: Vec::with_capacity(frames.len()),
    };
    for (x, t, c) in frames {
        out.blob_count.push(c.count());
        out.x.push(x);
        out.t.push(t);
        out.blobs.push(c);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OcclusionEpisode {
    /// First frame with the reduced count.
    pub start: usize,
    /// Last frame with the reduced count.
    pub end: usize,
    pub n_before: usize,
    pub m_during: usize,
}

impl OcclusionEpisode {
    pub fn contains(&self, frame: usize) -> bool {
        (self.start..=self.end).contains(&frame)
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Spans where the count drops below the preceding `n` and later returns to
/// exactly `n`. Scanned left to right; episodes never overlap.
pub fn detect_occlusion_episodes(counts: &[usize]) -> Vec<OcclusionEpisode> {
    let mut out = Vec::new();
    let mut i = 1;
    while i < counts.len() {
        let n = counts[i - 1];
        if counts[i] < n {
            let mut j = i;
            while j + 1 < counts.len() && counts[j + 1] < n {
                j += 1;
            }
            if j + 1 < counts.len() && counts[j + 1] == n {
                out.push(OcclusionEpisode {
                    start: i,
                    end: j,
                    n_before: n,
                    m_during: counts[i..=j].iter().copied().max().unwrap_or(0),
                });
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    out
}

/// Appearance, box size and position of a blob, as used by the matching cost.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobDescriptor {
    /// 16-bin RGB and LAB channel histograms, 96 values summing to 1.
    pub hist: Vec<f64>,
    pub bbox_area: f64,
    pub centroid: (f64, f64),
}

impl BlobDescriptor {
    pub fn from_mask(image: &RgbImage, mask: &Mask) -> Result<Self> {
        let dims = (image.width() as usize, image.height() as usize);
        if mask.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: mask.dims(),
            });
        }
        let (w, h) = dims;
        let mut pixels = Vec::new();
        let (mut sx, mut sy) = (0.0, 0.0);
        let mut b = (w, h, 0, 0);
        for y in 0..h {
            for x in 0..w {
                if *mask.get(x, y) {
                    pixels.push(image.get_pixel(x as u32, y as u32).0);
                    sx += x as f64;
                    sy += y as f64;
                    b = (b.0.min(x), b.1.min(y), b.2.max(x), b.3.max(y));
                }
            }
        }
        if pixels.is_empty() {
            return Err(Error::EmptyMask);
        }
        let n = pixels.len() as f64;
        Ok(Self {
            hist: channel_histogram(&pixels, &[ColorSpace::Rgb, ColorSpace::Lab], EDGE_HIST_BINS)?,
            bbox_area: ((b.2 - b.0 + 1) * (b.3 - b.1 + 1)) as f64,
            centroid: (sx / n, sy / n),
        })
    }
}

/// Histogram distance, relative box-area difference and centroid distance
/// over the frame diagonal, equally weighted.
pub fn edge_cost(p: &BlobDescriptor, q: &BlobDescriptor, dims: (usize, usize)) -> f64 {
    let hist = hellinger(&p.hist, &q.hist);
    let big = p.bbox_area.max(q.bbox_area);
    let size = if big > 0.0 {
        (p.bbox_area - q.bbox_area).abs() / big
    } else {
        0.0
    };
    let diag = ((dims.0 * dims.0 + dims.1 * dims.1) as f64).sqrt();
    let dist = (p.centroid.0 - q.centroid.0).hypot(p.centroid.1 - q.centroid.1);
    let pos = if diag > 0.0 { (dist / diag).min(1.0) } else { 0.0 };
    hist + size + pos
}

/// The objects of an ID raster in ascending ID order.
pub fn id_objects(image: &RgbImage, ids: &Grid<u32>) -> Result<Vec<(u32, BlobDescriptor)>> {
    let mut present: Vec<u32> = ids.iter().copied().filter(|&i| i != 0).collect();
    present.sort_unstable();
    present.dedup();
    present
        .into_iter()
        .map(|id| Ok((id, BlobDescriptor::from_mask(image, &ids.map(|&v| v == id))?)))
        .collect()
}

/// For each current blob, the previous ID and pair cost it is matched to.
fn match_to_previous(
    prev: &[(u32, BlobDescriptor)],
    cur: &[BlobDescriptor],
    dims: (usize, usize),
) -> Result<Vec<Option<(u32, f64)>>> {
    let mut out = vec![None; cur.len()];
    if prev.is_empty() || cur.is_empty() {
        return Ok(out);
    }
    let cost: Vec<Vec<f64>> = prev
        .iter()
        .map(|(_, p)| cur.iter().map(|q| edge_cost(p, q, dims)).collect())
        .collect();
    for (i, j) in hungarian_match(&cost)?.pairs {
        out[j] = Some((prev[i].0, cost[i][j]));
    }
    Ok(out)
}

/// IDs for the blobs of one frame: matched blobs inherit the previous ID,
/// the rest take fresh IDs from `next_id` in component order.
pub fn track_frame(
    image: &RgbImage,
    blobs: &Components,
    prev: &[(u32, BlobDescriptor)],
    next_id: &mut u32,
) -> Result<Grid<u32>> {
    let dims = blobs.labels.dims();
    let descs: Vec<BlobDescriptor> = (1..=blobs.count() as u32)
        .map(|c| BlobDescriptor::from_mask(image, &blobs.mask(c)))
        .collect::<Result<_>>()?;
    let matched = match_to_previous(prev, &descs, dims)?;
    let ids: Vec<u32> = matched
        .iter()
        .map(|m| match m {
            Some((id, _)) => *id,
            None => {
                *next_id += 1;
                *next_id - 1
            }
        })
        .collect();
    Ok(blobs.labels.map(|&c| if c == 0 { 0 } else { ids[c as usize - 1] }))
}

/// Splits the blobs of each episode frame among candidate regions matched
/// to the previous frame's objects, chaining from the frame before the
/// episode. Candidates are clipped to the frame's foreground; contested
/// pixels go to the lower-cost pair and uncovered ones keep their blob's ID.
/// A frame without candidates keeps its blob IDs.
pub fn reassign_ids(
    episode: &OcclusionEpisode,
    images: &[RgbImage],
    labels: &InitialLabels,
    proposals: &[Vec<Mask>],
    prior_ids: &Grid<u32>,
    next_id: &mut u32,
) -> Result<Vec<Grid<u32>>> {
    if episode.start == 0 || episode.end >= images.len() || proposals.len() != episode.len() {
        return Err(Error::Invariant("episode does not fit the sequence".into()));
    }
    let mut prev_ids = prior_ids.clone();
    let mut out = Vec::with_capacity(episode.len());
    for (k, f) in (episode.start..=episode.end).enumerate() {
        let prev = id_objects(&images[f - 1], &prev_ids)?;
        let base = track_frame(&images[f], &labels.blobs[f], &prev, next_id)?;
        let x = &labels.x[f];
        let cands: Vec<Mask> = proposals[k]
            .iter()
            .filter_map(|p| p.zip_map(x, |&a, &b| a && b).ok())
            .filter(|m| m.count() > 0)
            .collect();
        let ids = if cands.is_empty() {
            warn!("no proposals inside the blobs of frame {f}; occlusion left unsplit");
            base
        } else {
            let descs: Vec<BlobDescriptor> = cands
                .iter()
                .map(|m| BlobDescriptor::from_mask(&images[f], m))
                .collect::<Result<_>>()?;
            let matched = match_to_previous(&prev, &descs, x.dims())?;
            let mut best: Grid<Option<(f64, u32)>> = Grid::filled(x.width(), x.height(), None);
            for (m, cand) in matched.iter().zip(&cands) {
                let Some((id, cost)) = *m else { continue };
                for (slot, &inside) in best.as_mut_slice().iter_mut().zip(cand.iter()) {
                    if inside && slot.is_none_or(|(c, _)| cost < c) {
                        *slot = Some((cost, id));
                    }
                }
            }
            base.zip_map(&best, |&b, s| match s {
                Some((_, id)) if b != 0 => *id,
                _ => b,
            })?
        };
        prev_ids = ids.clone();
        out.push(ids);
    }
    Ok(out)
}

/// Per-frame object-ID rasters for the whole sequence. `proposals[f]` holds
/// the split candidates of frame `f`; only episode frames consult them.
pub fn track_ids(
    images: &[RgbImage],
    labels: &InitialLabels,
    episodes: &[OcclusionEpisode],
    proposals: &[Vec<Mask>],
) -> Result<Vec<Grid<u32>>> {
    if images.len() != labels.len() || proposals.len() != labels.len() {
        return Err(Error::Invariant("image, label and proposal counts disagree".into()));
    }
    let mut out: Vec<Grid<u32>> = Vec::with_capacity(images.len());
    let mut next_id = 1;
    let mut f = 0;
    while f < images.len() {
        if let Some(e) = episodes.iter().find(|e| e.start == f && f > 0) {
            let split = reassign_ids(
                e,
                images,
                labels,
                &proposals[e.start..=e.end],
                &out[f - 1],
                &mut next_id,
            )?;
            out.extend(split);
            f = e.end + 1;
            continue;
        }
        let prev = match out.last() {
            Some(ids) => id_objects(&images[f - 1], ids)?,
            None => Vec::new(),
        };
        out.push(track_frame(&images[f], &labels.blobs[f], &prev, &mut next_id)?);
        f += 1;
    }
    Ok(out)
}

/// Splits a region into `n` colour groups: superpixels clipped to the
/// region are clustered by area-weighted k-means on mean LAB, seeded from
/// the largest fragment and then greedily by weighted squared distance.
pub fn split_region(image: &RgbImage, sp: &SuperpixelMap, region: &Mask, n: usize) -> Result<Vec<Mask>> {
    region.ensure_same_dims(&sp.labels)?;
    let mut sum = vec![[0.0f64; 3]; sp.len()];
    let mut area = vec![0usize; sp.len()];
    for (i, (&inside, &l)) in region.iter().zip(sp.labels.iter()).enumerate() {
        if inside {
            let (w, _) = region.dims();
            let p = image.get_pixel((i % w) as u32, (i / w) as u32).0;
            let c = rgb_to_lab(p[0], p[1], p[2]);
            for k in 0..3 {
                sum[l as usize][k] += c[k];
            }
            area[l as usize] += 1;
        }
    }
    let frags: Vec<(usize, [f64; 3], f64)> = (0..sp.len())
        .filter(|&l| area[l] > 0)
        .map(|l| (l, sum[l].map(|v| v / area[l] as f64), area[l] as f64))
        .collect();
    if frags.is_empty() || n == 0 {
        return Ok(Vec::new());
    }
    let d2 = |a: &[f64; 3], b: &[f64; 3]| (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>();
    let first = frags
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .2.total_cmp(&b.1 .2).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut centers = vec![frags[first].1];
    while centers.len() < n.min(frags.len()) {
        let score = |f: &(usize, [f64; 3], f64)| {
            f.2 * centers.iter().map(|c| d2(&f.1, c)).fold(f64::INFINITY, f64::min)
        };
        let (i, s) = frags
            .iter()
            .enumerate()
            .map(|(i, f)| (i, score(f)))
            .fold((0, f64::NEG_INFINITY), |b, x| if x.1 > b.1 { x } else { b });
        if !(s > 0.0) {
            break;
        }
        centers.push(frags[i].1);
    }
    let mut assign = vec![0usize; frags.len()];
    for _ in 0..50 {
        let mut changed = false;
        for (a, f) in assign.iter_mut().zip(&frags) {
            let mut best = (f64::INFINITY, 0);
            for (c, center) in centers.iter().enumerate() {
                let d = d2(&f.1, center);
                if d < best.0 {
                    best = (d, c);
                }
            }
            if *a != best.1 {
                *a = best.1;
                changed = true;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let (mut acc, mut wsum) = ([0.0; 3], 0.0);
            for (f, _) in frags.iter().zip(&assign).filter(|(_, &a)| a == c) {
                for k in 0..3 {
                    acc[k] += f.1[k] * f.2;
                }
                wsum += f.2;
            }
            if wsum > 0.0 {
                *center = acc.map(|v| v / wsum);
            }
        }
        if !changed {
            break;
        }
    }
    let mut group = vec![usize::MAX; sp.len()];
    for (f, &a) in frags.iter().zip(&assign) {
        group[f.0] = a;
    }
    Ok((0..centers.len())
        .map(|c| region.zip_map(&sp.labels, |&r, &l| r && group[l as usize] == c).expect("same dims"))
        .filter(|m| m.count() > 0)
        .collect())
}
