//! SLIC superpixels and the spatial/temporal neighbour structure built on them.

use std::collections::BTreeMap;

use image::RgbImage;

use crate::color::rgb_to_lab;
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::grid::Grid;

const SLIC_ITERATIONS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelStats {
    pub area: usize,
    pub centroid: (f64, f64),
    pub mean_lab: [f64; 3],
    pub mean_rgb: [f64; 3],
    /// Pixel edges on the superpixel's outline, image border included.
    pub perimeter: usize,
    /// Inclusive bounding box `(x0, y0, x1, y1)`.
    pub bbox: (usize, usize, usize, usize),
}

/// A partition of the frame into 4-connected superpixels labelled `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelMap {
    pub labels: Grid<u32>,
    pub stats: Vec<SuperpixelStats>,
}

impl SuperpixelMap {
    /// Builds a map from an arbitrary label raster. Labels are compacted to
    /// `0..n` in order of first appearance; connectivity is not enforced.
    pub fn from_labels(image: &RgbImage, labels: &Grid<u32>) -> Result<Self> {
        let dims = (image.width() as usize, image.height() as usize);
        if labels.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: labels.dims(),
            });
        }
        let mut remap = BTreeMap::new();
        let mut order = Vec::new();
        let compact = labels.map(|&l| {
            *remap.entry(l).or_insert_with(|| {
                order.push(l);
                order.len() as u32 - 1
            })
        });
        let stats = compute_stats(image, &compact, order.len());
        Ok(Self {
            labels: compact,
            stats,
        })
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.labels.dims()
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> usize {
        *self.labels.get(x, y) as usize
    }

    /// Pixel indices (raster order) of each superpixel.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.len()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i);
        }
        out
    }
}

fn compute_stats(image: &RgbImage, labels: &Grid<u32>, n: usize) -> Vec<SuperpixelStats> {
    let (w, h) = labels.dims();
    let mut area = vec![0usize; n];
    let mut sx = vec![0f64; n];
    let mut sy = vec![0f64; n];
    let mut lab = vec![[0f64; 3]; n];
    let mut rgb = vec![[0f64; 3]; n];
    let mut perim = vec![0usize; n];
    let mut bbox = vec![(usize::MAX, usize::MAX, 0usize, 0usize); n];
    for y in 0..h {
        for x in 0..w {
            let l = *labels.get(x, y) as usize;
            let p = image.get_pixel(x as u32, y as u32);
            area[l] += 1;
            sx[l] += x as f64;
            sy[l] += y as f64;
            let c = rgb_to_lab(p[0], p[1], p[2]);
            for k in 0..3 {
                lab[l][k] += c[k];
                rgb[l][k] += p[k] as f64;
            }
            let b = &mut bbox[l];
            *b = (b.0.min(x), b.1.min(y), b.2.max(x), b.3.max(y));
            // 4 pixel edges; count those facing the border or another label
            let sides = [
                x == 0 || *labels.get(x - 1, y) as usize != l,
                x + 1 == w || *labels.get(x + 1, y) as usize != l,
                y == 0 || *labels.get(x, y - 1) as usize != l,
                y + 1 == h || *labels.get(x, y + 1) as usize != l,
            ];
            perim[l] += sides.iter().filter(|&&s| s).count();
        }
    }
    (0..n)
        .map(|l| {
            let a = area[l].max(1) as f64;
            SuperpixelStats {
                area: area[l],
                centroid: (sx[l] / a, sy[l] / a),
                mean_lab: lab[l].map(|v| v / a),
                mean_rgb: rgb[l].map(|v| v / a),
                perimeter: perim[l],
                bbox: bbox[l],
            }
        })
        .collect()
}

#[derive(Clone, Copy)]
struct Center {
    lab: [f64; 3],
    x: f64,
    y: f64,
}

fn lab_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// SLIC: k-means in LABxy with `d = |dLAB / 100|^2 + regularizer |dxy|^2 / regionsize^2`,
/// seeds on a `regionsize` grid, 10 iterations, then connectivity enforcement.
pub fn slic_segment(image: &RgbImage, regionsize: usize, regularizer: f64) -> Result<SuperpixelMap> {
    if regionsize < 2 {
        return Err(Error::InvalidConfig(format!("regionsize must be >= 2, got {regionsize}")));
    }
    let (w, h) = (image.width() as usize, image.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::EmptyInput);
    }
    let lab: Vec<[f64; 3]> = image.pixels().map(|p| rgb_to_lab(p[0], p[1], p[2])).collect();
    let s = regionsize as f64;
    let nx = ((w as f64 / s).round() as usize).max(1);
    let ny = ((h as f64 / s).round() as usize).max(1);
    let (step_x, step_y) = (w as f64 / nx as f64, h as f64 / ny as f64);

    let grad = |x: usize, y: usize| -> f64 {
        let at = |xx: usize, yy: usize| &lab[yy * w + xx];
        let gx = lab_dist(at((x + 1).min(w - 1), y), at(x.saturating_sub(1), y));
        let gy = lab_dist(at(x, (y + 1).min(h - 1)), at(x, y.saturating_sub(1)));
        gx * gx + gy * gy
    };
    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let cx = (((i as f64 + 0.5) * step_x) as usize).min(w - 1);
            let cy = (((j as f64 + 0.5) * step_y) as usize).min(h - 1);
            // move the seed to the lowest-gradient pixel of its 3x3 neighbourhood
            let mut best = (grad(cx, cy), cx, cy);
            for yy in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                for xx in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                    let g = grad(xx, yy);
                    if g < best.0 {
                        best = (g, xx, yy);
                    }
                }
            }
            centers.push(Center {
                lab: lab[best.2 * w + best.1],
                x: best.1 as f64,
                y: best.2 as f64,
            });
        }
    }

    let spatial_weight = regularizer / (s * s);
    let color_dist = |a: &[f64; 3], b: &[f64; 3]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)) * 1e-4;
    let mut assign = vec![u32::MAX; w * h];
    let mut dist = vec![f64::INFINITY; w * h];
    for _ in 0..SLIC_ITERATIONS {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let x0 = (c.x - s).floor().max(0.0) as usize;
            let x1 = ((c.x + s).ceil() as usize).min(w - 1);
            let y0 = (c.y - s).floor().max(0.0) as usize;
            let y1 = ((c.y + s).ceil() as usize).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = y * w + x;
                    let dxy = (x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2);
                    let d = color_dist(&lab[i], &c.lab) + spatial_weight * dxy;
                    if d < dist[i] {
                        dist[i] = d;
                        assign[i] = k as u32;
                    }
                }
            }
        }
        // pixels outside every window go to the nearest center overall
        for i in 0..w * h {
            if assign[i] == u32::MAX || dist[i].is_infinite() {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                let mut best = (f64::INFINITY, 0u32);
                for (k, c) in centers.iter().enumerate() {
                    let d = color_dist(&lab[i], &c.lab) + spatial_weight * ((x - c.x).powi(2) + (y - c.y).powi(2));
                    if d < best.0 {
                        best = (d, k as u32);
                    }
                }
                assign[i] = best.1;
            }
        }
        let mut acc = vec![([0f64; 3], 0f64, 0f64, 0usize); centers.len()];
        for (i, &k) in assign.iter().enumerate() {
            let a = &mut acc[k as usize];
            for c in 0..3 {
                a.0[c] += lab[i][c];
            }
            a.1 += (i % w) as f64;
            a.2 += (i / w) as f64;
            a.3 += 1;
        }
        for (c, a) in centers.iter_mut().zip(acc) {
            if a.3 > 0 {
                let n = a.3 as f64;
                *c = Center {
                    lab: a.0.map(|v| v / n),
                    x: a.1 / n,
                    y: a.2 / n,
                };
            }
        }
    }

    let raw = Grid::from_vec(w, h, assign)?;
    let min_size = (regionsize * regionsize / 16).max(1);
    let labels = enforce_connectivity(&raw, &lab, min_size);
    SuperpixelMap::from_labels(image, &labels)
}

/// 4-connected components of a label raster: (component id raster, count).
pub(crate) fn label_components4(labels: &Grid<u32>) -> (Grid<u32>, usize) {
    let (w, h) = labels.dims();
    let mut comp = Grid::filled(w, h, u32::MAX);
    let mut n = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if comp.as_slice()[start] != u32::MAX {
            continue;
        }
        let l = labels.as_slice()[start];
        comp.as_mut_slice()[start] = n;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            for (nx, ny) in labels.neighbors4(x, y) {
                let j = ny * w + nx;
                if comp.as_slice()[j] == u32::MAX && labels.as_slice()[j] == l {
                    comp.as_mut_slice()[j] = n;
                    stack.push(j);
                }
            }
        }
        n += 1;
    }
    (comp, n as usize)
}

/// Keeps, per label, its largest 4-connected piece when that piece has at
/// least `min_size` pixels. Every other piece is merged into the adjacent
/// surviving region with the closest mean colour.
fn enforce_connectivity(labels: &Grid<u32>, lab: &[[f64; 3]], min_size: usize) -> Grid<u32> {
    let (w, h) = labels.dims();
    let (comp, n) = label_components4(labels);
    let mut size = vec![0usize; n];
    let mut mean = vec![[0f64; 3]; n];
    let mut owner = vec![0u32; n];
    for (i, &c) in comp.iter().enumerate() {
        size[c as usize] += 1;
        owner[c as usize] = labels.as_slice()[i];
        for k in 0..3 {
            mean[c as usize][k] += lab[i][k];
        }
    }
    for (m, &s) in mean.iter_mut().zip(&size) {
        *m = m.map(|v| v / s as f64);
    }
    let mut largest: BTreeMap<u32, usize> = BTreeMap::new();
    for c in 0..n {
        let e = largest.entry(owner[c]).or_insert(c);
        if size[c] > size[*e] {
            *e = c;
        }
    }
    let mut keep = vec![false; n];
    for &c in largest.values() {
        keep[c] = size[c] >= min_size;
    }
    if !keep.iter().any(|&k| k) {
        let big = (0..n).max_by_key(|&c| (size[c], std::cmp::Reverse(c))).unwrap();
        keep[big] = true;
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for y in 0..h {
        for x in 0..w {
            let a = *comp.get(x, y) as usize;
            for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                if nx < w && ny < h {
                    let b = *comp.get(nx, ny) as usize;
                    if a != b {
                        adj[a].push(b);
                        adj[b].push(a);
                    }
                }
            }
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }
    // resolved[c] = surviving component that c is merged into
    let mut resolved: Vec<Option<usize>> = (0..n).map(|c| keep[c].then_some(c)).collect();
    loop {
        let mut changed = false;
        let mut pending = false;
        for c in 0..n {
            if resolved[c].is_some() {
                continue;
            }
            pending = true;
            let target = adj[c]
                .iter()
                .filter(|&&d| resolved[d].is_some())
                .min_by(|&&a, &&b| {
                    lab_dist(&mean[c], &mean[a])
                        .total_cmp(&lab_dist(&mean[c], &mean[b]))
                        .then(a.cmp(&b))
                })
                .copied();
            if let Some(t) = target {
                resolved[c] = resolved[t];
                changed = true;
            }
        }
        if !pending || !changed {
            break;
        }
    }
    comp.map(|&c| resolved[c as usize].unwrap_or(c as usize) as u32)
}

/// Spatial adjacency: neighbour lists plus the number of 4-neighbour pixel
/// pairs straddling each adjacent pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    pub neighbors: Vec<Vec<usize>>,
    /// Keyed by `(min, max)` label.
    pub shared: BTreeMap<(usize, usize), usize>,
}

impl Adjacency {
    pub fn shared_length(&self, p: usize, q: usize) -> usize {
        self.shared.get(&(p.min(q), p.max(q))).copied().unwrap_or(0)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.shared.iter().map(|(&(p, q), &s)| (p, q, s))
    }
}

pub fn spatial_neighbors(sp: &SuperpixelMap) -> Adjacency {
    let (w, h) = sp.dims();
    let mut shared = BTreeMap::new();
    for y in 0..h {
        for x in 0..w {
            let a = sp.label(x, y);
            for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                if nx < w && ny < h {
                    let b = sp.label(nx, ny);
                    if a != b {
                        *shared.entry((a.min(b), a.max(b))).or_insert(0) += 1;
                    }
                }
            }
        }
    }
    let mut neighbors = vec![Vec::new(); sp.len()];
    for &(p, q) in shared.keys() {
        neighbors[p].push(q);
        neighbors[q].push(p);
    }
    for n in neighbors.iter_mut() {
        n.sort_unstable();
    }
    Adjacency { neighbors, shared }
}

/// A superpixel of frame `i` overlapping one of the adjacent frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemporalLink {
    pub p: usize,
    pub r: usize,
    pub overlap: usize,
}

/// Overlaps at identical pixel coordinates, sorted by `(p, r)`.
pub fn temporal_neighbors(a: &SuperpixelMap, b: &SuperpixelMap) -> Result<Vec<TemporalLink>> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            found: b.dims(),
        });
    }
    let mut counts = BTreeMap::new();
    for (&p, &r) in a.labels.iter().zip(b.labels.iter()) {
        *counts.entry((p as usize, r as usize)).or_insert(0usize) += 1;
    }
    Ok(links(counts))
}

/// Overlaps after moving each pixel of `a` along `flow` (rounded, clamped).
pub fn temporal_neighbors_warped(a: &SuperpixelMap, b: &SuperpixelMap, flow: &FlowField) -> Result<Vec<TemporalLink>> {
    if a.dims() != b.dims() || flow.dims() != a.dims() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            found: if a.dims() != b.dims() { b.dims() } else { flow.dims() },
        });
    }
    let (w, h) = a.dims();
    let mut counts = BTreeMap::new();
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.at(x, y);
            let tx = (x as f64 + u as f64).round().clamp(0.0, (w - 1) as f64) as usize;
            let ty = (y as f64 + v as f64).round().clamp(0.0, (h - 1) as f64) as usize;
            *counts.entry((a.label(x, y), b.label(tx, ty))).or_insert(0usize) += 1;
        }
    }
    Ok(links(counts))
}

fn links(counts: BTreeMap<(usize, usize), usize>) -> Vec<TemporalLink> {
    counts
        .into_iter()
        .map(|((p, r), overlap)| TemporalLink { p, r, overlap })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn check_partition(sp: &SuperpixelMap) {
        let n = sp.len();
        assert!(n >= 1);
        let mut seen = vec![0usize; n];
        for &l in sp.labels.iter() {
            seen[l as usize] += 1;
        }
        assert!(seen.iter().all(|&c| c > 0));
        assert_eq!(seen.iter().sum::<usize>(), sp.labels.len());
        // each label one 4-connected piece
        let (_, pieces) = label_components4(&sp.labels);
        assert_eq!(pieces, n);
    }

    #[test]
    fn uniform_image_count_near_nominal() {
        let img = RgbImage::from_pixel(100, 100, Rgb([90, 120, 60]));
        let sp = slic_segment(&img, 20, 0.1).unwrap();
        assert!((17..=33).contains(&sp.len()), "n = {}", sp.len());
        check_partition(&sp);
        assert_eq!(sp.stats.iter().map(|s| s.area).sum::<usize>(), 100 * 100);
    }

    #[test]
    fn textured_image_is_a_connected_partition() {
        let img = crate::synthetic::moving_square(2, 96, 72).frames[0].clone();
        let sp = slic_segment(&img, 20, 0.1).unwrap();
        check_partition(&sp);
    }

    #[test]
    fn bicolor_halves_do_not_mix() {
        let img = RgbImage::from_fn(80, 60, |x, _| if x < 40 { Rgb([220, 30, 30]) } else { Rgb([30, 30, 220]) });
        let sp = slic_segment(&img, 20, 0.1).unwrap();
        for (l, st) in sp.stats.iter().enumerate() {
            let (mut left, mut right) = (0, 0);
            for y in 0..60 {
                for x in 0..80 {
                    if sp.label(x, y) == l {
                        if x < 40 {
                            left += 1
                        } else {
                            right += 1
                        }
                    }
                }
            }
            assert!(left == 0 || right == 0, "superpixel {l} straddles ({left}/{right}), area {}", st.area);
        }
    }

    #[test]
    fn slic_is_deterministic() {
        let img = crate::synthetic::moving_square(2, 64, 48).frames[1].clone();
        assert_eq!(slic_segment(&img, 12, 0.1).unwrap(), slic_segment(&img, 12, 0.1).unwrap());
    }

    #[test]
    fn vertical_split_adjacency() {
        let img = RgbImage::new(6, 4);
        let labels = Grid::from_fn(6, 4, |x, _| (x >= 3) as u32);
        let sp = SuperpixelMap::from_labels(&img, &labels).unwrap();
        let adj = spatial_neighbors(&sp);
        assert_eq!(adj.neighbors, vec![vec![1], vec![0]]);
        assert_eq!(adj.shared_length(0, 1), 4);
        // perimeter counts border edges plus the 4 shared edges
        assert_eq!(sp.stats[0].perimeter, 3 + 3 + 4 + 4);
        let single = SuperpixelMap::from_labels(&img, &Grid::new(6, 4)).unwrap();
        assert!(spatial_neighbors(&single).neighbors[0].is_empty());
    }

    #[test]
    fn identical_maps_link_twins() {
        let img = RgbImage::new(6, 4);
        let labels = Grid::from_fn(6, 4, |x, y| (x / 2 + 3 * (y / 2)) as u32);
        let sp = SuperpixelMap::from_labels(&img, &labels).unwrap();
        let links = temporal_neighbors(&sp, &sp).unwrap();
        assert_eq!(links.len(), sp.len());
        assert!(links.iter().all(|l| l.p == l.r && l.overlap == 4));
        let other = SuperpixelMap::from_labels(&RgbImage::new(5, 4), &Grid::new(5, 4)).unwrap();
        assert!(temporal_neighbors(&sp, &other).is_err());
    }

    #[test]
    fn warped_overlap_with_zero_flow_matches_plain() {
        let img = RgbImage::new(8, 6);
        let a = SuperpixelMap::from_labels(&img, &Grid::from_fn(8, 6, |x, _| (x / 3) as u32)).unwrap();
        let b = SuperpixelMap::from_labels(&img, &Grid::from_fn(8, 6, |x, _| ((x + 1) / 3) as u32)).unwrap();
        assert_eq!(
            temporal_neighbors_warped(&a, &b, &FlowField::zeros(8, 6)).unwrap(),
            temporal_neighbors(&a, &b).unwrap()
        );
    }

    fn block_map(w: usize, h: usize, bs: usize, shift: usize) -> SuperpixelMap {
        let labels = Grid::from_fn(w, h, |x, y| (((x + shift) / bs) + 10 * ((y + shift) / bs)) as u32);
        SuperpixelMap::from_labels(&RgbImage::new(w as u32, h as u32), &labels).unwrap()
    }

    proptest! {
        #[test]
        fn adjacency_equals_pixel_pair_scan(seed in proptest::collection::vec(0u32..5, 9 * 7)) {
            let labels = Grid::from_vec(9, 7, seed).unwrap();
            let sp = SuperpixelMap::from_labels(&RgbImage::new(9, 7), &labels).unwrap();
            let adj = spatial_neighbors(&sp);
            let mut pairs = BTreeSet::new();
            for y1 in 0..7usize {
                for x1 in 0..9usize {
                    for y2 in 0..7usize {
                        for x2 in 0..9usize {
                            let d = x1.abs_diff(x2) + y1.abs_diff(y2);
                            let (a, b) = (sp.label(x1, y1), sp.label(x2, y2));
                            if d == 1 && a != b {
                                pairs.insert((a.min(b), a.max(b)));
                            }
                        }
                    }
                }
            }
            let got: BTreeSet<_> = adj.shared.keys().copied().collect();
            prop_assert_eq!(got, pairs);
            for (p, ns) in adj.neighbors.iter().enumerate() {
                prop_assert!(!ns.contains(&p));
                for &q in ns {
                    prop_assert!(adj.neighbors[q].contains(&p));
                }
            }
        }

        #[test]
        fn shifted_grid_overlaps_match_cooccurrence(shift in 0usize..4) {
            let a = block_map(12, 10, 4, 0);
            let b = block_map(12, 10, 4, shift);
            let links = temporal_neighbors(&a, &b).unwrap();
            let mut oracle = BTreeMap::new();
            for y in 0..10 {
                for x in 0..12 {
                    *oracle.entry((a.label(x, y), b.label(x, y))).or_insert(0usize) += 1;
                }
            }
            prop_assert_eq!(links.len(), oracle.len());
            for l in &links {
                prop_assert_eq!(oracle[&(l.p, l.r)], l.overlap);
            }
            prop_assert_eq!(links.iter().map(|l| l.overlap).sum::<usize>(), 120);
            let covered: BTreeSet<usize> = links.iter().map(|l| l.p).collect();
            prop_assert_eq!(covered.len(), a.len());
        }
    }
}
