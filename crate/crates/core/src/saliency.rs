//! Appearance saliency by two-stage graph ranking over superpixels with
//! image-border background priors.

use std::collections::BTreeSet;

use image::RgbImage;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarMap};
use crate::superpixels::{spatial_neighbors, SuperpixelMap};

/// Ranking regulariser in `f = (D - a W)^-1 y`.
const RANK_ALPHA: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SaliencySource {
    Rgb,
    C,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub values: ScalarMap,
    pub source: SaliencySource,
}

impl SaliencyMap {
    pub fn uniform(dims: (usize, usize), source: SaliencySource) -> Self {
        Self {
            values: Grid::filled(dims.0, dims.1, 0.5),
            source,
        }
    }
}

struct RankingGraph {
    system: DMatrix<f64>,
}

impl RankingGraph {
    fn new(sp: &SuperpixelMap) -> Self {
        let n = sp.len();
        let adj = spatial_neighbors(sp);
        let mut edges: BTreeSet<(usize, usize)> = adj.shared.keys().copied().collect();
        // border superpixels form a closed loop
        let border = border_nodes(sp);
        let all_border: Vec<usize> = border.iter().flatten().copied().collect::<BTreeSet<_>>().into_iter().collect();
        for (i, &a) in all_border.iter().enumerate() {
            for &b in &all_border[i + 1..] {
                edges.insert((a, b));
            }
        }
        let dist = |p: usize, q: usize| {
            let (a, b) = (&sp.stats[p].mean_lab, &sp.stats[q].mean_lab);
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
        };
        let adjacent: Vec<f64> = adj.shared.keys().map(|&(p, q)| dist(p, q)).collect();
        let sigma = if adjacent.is_empty() {
            0.0
        } else {
            adjacent.iter().sum::<f64>() / adjacent.len() as f64
        };
        let mut w = DMatrix::<f64>::zeros(n, n);
        for &(p, q) in &edges {
            let d = dist(p, q);
            let a = if sigma > 0.0 {
                (-d * d / (2.0 * sigma * sigma)).exp()
            } else {
                1.0
            };
            w[(p, q)] = a;
            w[(q, p)] = a;
        }
        let mut system = -RANK_ALPHA * &w;
        for i in 0..n {
            system[(i, i)] += w.row(i).sum();
        }
        // isolated nodes would make the system singular
        for i in 0..n {
            if system[(i, i)] == 0.0 {
                system[(i, i)] = 1.0;
            }
        }
        Self { system }
    }

    fn rank(&self, seeds: &[bool]) -> Result<DVector<f64>> {
        let y = DVector::from_iterator(seeds.len(), seeds.iter().map(|&s| s as u8 as f64));
        let lu = self.system.clone().lu();
        lu.solve(&y)
            .ok_or_else(|| Error::Invariant("graph-ranking system is singular".into()))
    }
}

/// Superpixels touching the top, bottom, left and right borders.
fn border_nodes(sp: &SuperpixelMap) -> [Vec<usize>; 4] {
    let (w, h) = sp.dims();
    let side = |it: &mut dyn Iterator<Item = (usize, usize)>| -> Vec<usize> {
        it.map(|(x, y)| sp.label(x, y)).collect::<BTreeSet<_>>().into_iter().collect()
    };
    [
        side(&mut (0..w).map(|x| (x, 0))),
        side(&mut (0..w).map(|x| (x, h - 1))),
        side(&mut (0..h).map(|y| (0, y))),
        side(&mut (0..h).map(|y| (w - 1, y))),
    ]
}

fn minmax(v: &[f64]) -> Option<Vec<f64>> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (hi > lo).then(|| v.iter().map(|x| (x - lo) / (hi - lo)).collect())
}

/// Two-stage ranking: background queries on each border, then foreground
/// queries from the thresholded first-stage map. Scores are min-max
/// normalised and painted onto the pixels of each superpixel. A single
/// superpixel, or one without colour contrast, yields a flat 0.5 map.
pub fn superpixel_saliency(image: &RgbImage, sp: &SuperpixelMap, source: SaliencySource) -> Result<SaliencyMap> {
    let dims = (image.width() as usize, image.height() as usize);
    if sp.dims() != dims {
        return Err(Error::DimensionMismatch {
            expected: dims,
            found: sp.dims(),
        });
    }
    let n = sp.len();
    if n <= 1 {
        return Ok(SaliencyMap::uniform(dims, source));
    }
    let first = sp.stats[0].mean_lab;
    let contrast = sp
        .stats
        .iter()
        .any(|s| (0..3).any(|k| (s.mean_lab[k] - first[k]).abs() > 1e-9));
    if !contrast {
        return Ok(SaliencyMap::uniform(dims, source));
    }

    let graph = RankingGraph::new(sp);
    let mut stage1 = vec![1.0; n];
    for side in border_nodes(sp) {
        let mut seeds = vec![false; n];
        for s in side {
            seeds[s] = true;
        }
        let f = graph.rank(&seeds)?;
        let f: Vec<f64> = f.iter().copied().collect();
        let norm = minmax(&f).unwrap_or_else(|| vec![0.0; n]);
        for (acc, v) in stage1.iter_mut().zip(norm) {
            *acc *= 1.0 - v;
        }
    }
    let mean = stage1.iter().sum::<f64>() / n as f64;
    let fg: Vec<bool> = stage1.iter().map(|&v| v >= mean).collect();
    let f = graph.rank(&fg)?;
    let scores = match minmax(f.as_slice()) {
        Some(s) => s,
        None => return Ok(SaliencyMap::uniform(dims, source)),
    };
    Ok(SaliencyMap {
        values: sp.labels.map(|&l| scores[l as usize]),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::superpixels::slic_segment;
    use image::Rgb;

    fn square_image(shift: i16) -> RgbImage {
        RgbImage::from_fn(80, 60, |x, y| {
            let inside = (28..52).contains(&x) && (18..42).contains(&y);
            let base: i16 = if inside { 220 } else { 30 };
            let v = (base + shift).clamp(0, 255) as u8;
            Rgb([v, v, v])
        })
    }

    fn region_means(s: &SaliencyMap) -> (f64, f64) {
        let (mut a, mut na, mut b, mut nb) = (0.0, 0, 0.0, 0);
        for y in 0..60 {
            for x in 0..80 {
                let v = *s.values.get(x, y);
                if (28..52).contains(&x) && (18..42).contains(&y) {
                    a += v;
                    na += 1;
                } else {
                    b += v;
                    nb += 1;
                }
            }
        }
        (a / na as f64, b / nb as f64)
    }

    #[test]
    fn uniform_image_is_flat_half() {
        let img = RgbImage::from_pixel(60, 40, Rgb([50, 60, 70]));
        let sp = slic_segment(&img, 20, 0.1).unwrap();
        let s = superpixel_saliency(&img, &sp, SaliencySource::Rgb).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.5));
        let one = SuperpixelMap::from_labels(&img, &Grid::new(60, 40)).unwrap();
        let s = superpixel_saliency(&img, &one, SaliencySource::C).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn centered_square_is_salient() {
        let img = square_image(0);
        let sp = slic_segment(&img, 10, 0.1).unwrap();
        let s = superpixel_saliency(&img, &sp, SaliencySource::Rgb).unwrap();
        let (inside, outside) = region_means(&s);
        assert!(inside > 2.0 * outside, "inside {inside} outside {outside}");
    }

    #[test]
    fn brightness_shift_keeps_argmax_region() {
        for shift in [-20i16, 25] {
            let img = square_image(shift);
            let sp = slic_segment(&img, 10, 0.1).unwrap();
            let s = superpixel_saliency(&img, &sp, SaliencySource::Rgb).unwrap();
            let (inside, outside) = region_means(&s);
            assert!(inside > outside);
        }
    }

    #[test]
    fn values_in_unit_range_and_piecewise_constant() {
        for seed in 0..4u64 {
            let img = RgbImage::from_fn(48, 36, |x, y| {
                let n = crate::synthetic::hash_noise(x as i64, y as i64, seed);
                let m = crate::synthetic::hash_noise(x as i64 / 6, y as i64 / 6, seed + 11);
                Rgb([(n * 255.0) as u8, (m * 255.0) as u8, ((n * m) * 255.0) as u8])
            });
            let sp = slic_segment(&img, 12, 0.1).unwrap();
            let s = superpixel_saliency(&img, &sp, SaliencySource::Rgb).unwrap();
            let (lo, hi) = s.values.min_max();
            assert!(lo >= 0.0 && hi <= 1.0);
            let mut per_label = vec![None; sp.len()];
            for (v, &l) in s.values.iter().zip(sp.labels.iter()) {
                let slot = &mut per_label[l as usize];
                match slot {
                    None => *slot = Some(*v),
                    Some(prev) => assert_eq!(*prev, *v),
                }
            }
        }
    }
}
