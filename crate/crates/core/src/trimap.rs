//! Multilevel Otsu thresholding, the block-wise multi-scale level map `Y'`
//! and the moving trimap built from it.

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarMap};

pub const OTSU_BINS: usize = 256;

/// Thresholds found by multilevel Otsu over a 256-bin histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct OtsuThresholds {
    /// Bin indices where each upper class starts, strictly increasing in `1..256`.
    pub cuts: Vec<usize>,
    /// Threshold values in data units (midpoint between the occupied bins either side of each cut).
    pub values: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl OtsuThresholds {
    fn degenerate(value: f64, n: usize) -> Self {
        Self {
            cuts: Vec::new(),
            values: vec![value; n],
            lo: value,
            hi: value,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.cuts.is_empty()
    }

    pub fn bin(&self, x: f64) -> usize {
        bin_of(x, self.lo, self.hi)
    }

    /// Class index in `0..=n` of a value: the number of cuts at or below its bin.
    pub fn classify(&self, x: f64) -> usize {
        if self.is_degenerate() {
            return 0;
        }
        let b = self.bin(x);
        self.cuts.iter().take_while(|&&c| c <= b).count()
    }
}

#[inline]
fn bin_of(x: f64, lo: f64, hi: f64) -> usize {
    if !(hi > lo) {
        return 0;
    }
    let t = ((x - lo) / (hi - lo) * OTSU_BINS as f64).floor();
    if t.is_nan() || t < 0.0 {
        0
    } else {
        (t as usize).min(OTSU_BINS - 1)
    }
}

pub fn histogram(values: &[f64], lo: f64, hi: f64) -> [u64; OTSU_BINS] {
    let mut h = [0u64; OTSU_BINS];
    for &v in values {
        h[bin_of(v, lo, hi)] += 1;
    }
    h
}

/// Prefix sums of counts and of `bin * count`, exact in f64 for realistic sizes.
struct ClassStats {
    count: Vec<f64>,
    moment: Vec<f64>,
}

impl ClassStats {
    fn new(hist: &[u64; OTSU_BINS]) -> Self {
        let mut count = vec![0.0; OTSU_BINS + 1];
        let mut moment = vec![0.0; OTSU_BINS + 1];
        for b in 0..OTSU_BINS {
            count[b + 1] = count[b] + hist[b] as f64;
            moment[b + 1] = moment[b] + (b as f64) * hist[b] as f64;
        }
        Self { count, moment }
    }

    /// `S^2 / W` for the class covering bins `[a, b)`; empty classes score 0.
    #[inline]
    fn term(&self, a: usize, b: usize) -> f64 {
        let w = self.count[b] - self.count[a];
        if w == 0.0 {
            return 0.0;
        }
        let s = self.moment[b] - self.moment[a];
        s * s / w
    }
}

/// Exhaustive search for one or two cuts maximising the between-class
/// variance; ties go to the lexicographically smallest cut tuple.
pub fn otsu_cuts_exhaustive(hist: &[u64; OTSU_BINS], n: usize) -> Vec<usize> {
    let st = ClassStats::new(hist);
    match n {
        1 => {
            let mut best = (f64::NEG_INFINITY, 1);
            for k in 1..OTSU_BINS {
                let v = st.term(0, k) + st.term(k, OTSU_BINS);
                if v > best.0 {
                    best = (v, k);
                }
            }
            vec![best.1]
        }
        2 => {
            let mut best = (f64::NEG_INFINITY, (1, 2));
            for k1 in 1..OTSU_BINS - 1 {
                let head = st.term(0, k1);
                for k2 in k1 + 1..OTSU_BINS {
                    let v = head + st.term(k1, k2) + st.term(k2, OTSU_BINS);
                    if v > best.0 {
                        best = (v, (k1, k2));
                    }
                }
            }
            vec![best.1 .0, best.1 .1]
        }
        _ => otsu_cuts_dp(hist, n),
    }
}

/// Dynamic-programming search over `n` cuts. Suffix values are tabulated, then
/// cuts are fixed left to right taking the smallest index that attains the
/// optimum, which yields the lexicographically smallest optimal tuple.
pub fn otsu_cuts_dp(hist: &[u64; OTSU_BINS], n: usize) -> Vec<usize> {
    assert!(n >= 1 && n < OTSU_BINS, "number of cuts must lie in 1..256");
    let st = ClassStats::new(hist);
    // suffix[j][k]: best sum of classes j..=n when class j starts at bin k (j is 1-based)
    let mut suffix = vec![vec![f64::NEG_INFINITY; OTSU_BINS + 1]; n + 2];
    for k in n..OTSU_BINS {
        suffix[n][k] = st.term(k, OTSU_BINS);
    }
    for j in (1..n).rev() {
        // class j starts at k, class j+1 starts at k' in (k, 256 - (n - j - 1))
        for k in j..OTSU_BINS - (n - j) {
            let mut best = f64::NEG_INFINITY;
            for k2 in k + 1..=OTSU_BINS - (n - j) {
                if k2 >= OTSU_BINS {
                    break;
                }
                let v = st.term(k, k2) + suffix[j + 1][k2];
                if v > best {
                    best = v;
                }
            }
            suffix[j][k] = best;
        }
    }
    let mut cuts = Vec::with_capacity(n);
    let mut prev = 0usize;
    for j in 1..=n {
        let mut best = (f64::NEG_INFINITY, prev + 1);
        for k in prev + 1..=OTSU_BINS - (n - j + 1) {
            let v = st.term(prev, k) + suffix[j][k];
            if v > best.0 {
                best = (v, k);
            }
        }
        cuts.push(best.1);
        prev = best.1;
    }
    cuts
}

fn threshold_values(hist: &[u64; OTSU_BINS], cuts: &[usize], lo: f64, hi: f64) -> Vec<f64> {
    let width = (hi - lo) / OTSU_BINS as f64;
    let center = |b: usize| lo + (b as f64 + 0.5) * width;
    cuts.iter()
        .map(|&k| {
            let below = (0..k).rev().find(|&b| hist[b] > 0);
            let above = (k..OTSU_BINS).find(|&b| hist[b] > 0);
            match (below, above) {
                (Some(a), Some(b)) => 0.5 * (center(a) + center(b)),
                _ => lo + k as f64 * width,
            }
        })
        .collect()
}

/// Multilevel Otsu over a 256-bin histogram spanning the data range.
pub fn multilevel_otsu(values: &[f64], n_thresholds: usize) -> OtsuThresholds {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    multilevel_otsu_in_range(values, n_thresholds, lo, hi)
}

/// Multilevel Otsu with the histogram spanning `[lo, hi]`; values outside are
/// clamped into the end bins.
pub fn multilevel_otsu_in_range(values: &[f64], n_thresholds: usize, lo: f64, hi: f64) -> OtsuThresholds {
    assert!(n_thresholds >= 1);
    if values.is_empty() {
        return OtsuThresholds::degenerate(0.0, n_thresholds);
    }
    let vlo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let vhi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(vhi > vlo) || !(hi > lo) {
        return OtsuThresholds::degenerate(vlo, n_thresholds);
    }
    let hist = histogram(values, lo, hi);
    let cuts = otsu_cuts_exhaustive(&hist, n_thresholds);
    let values = threshold_values(&hist, &cuts, lo, hi);
    OtsuThresholds { cuts, values, lo, hi }
}

/// Half-open block boundaries splitting `len` into `parts`; the last block
/// absorbs the remainder.
pub fn block_ranges(len: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let step = len / parts;
    (0..parts)
        .map(|i| {
            let start = i * step;
            let end = if i + 1 == parts { len } else { (i + 1) * step };
            start..end
        })
        .collect()
}

/// Thresholds applied per block.
pub const BLOCK_OTSU_THRESHOLDS: usize = 7;

/// Sum over scales of the per-block 7-threshold Otsu class index (0..=7) of
/// each pixel. Saliency values are binned over the fixed range `[0, 1]`.
pub fn block_level_map(y: &ScalarMap, grids: &[(usize, usize)]) -> Grid<u32> {
    let (w, h) = y.dims();
    let mut levels = Grid::<u32>::new(w, h);
    for &(rows, cols) in grids {
        for ys in block_ranges(h, rows) {
            for xs in block_ranges(w, cols) {
                if ys.is_empty() || xs.is_empty() {
                    continue;
                }
                let mut vals = Vec::with_capacity(ys.len() * xs.len());
                for yy in ys.clone() {
                    for xx in xs.clone() {
                        vals.push(*y.get(xx, yy));
                    }
                }
                let t = multilevel_otsu_in_range(&vals, BLOCK_OTSU_THRESHOLDS, 0.0, 1.0);
                for yy in ys.clone() {
                    for xx in xs.clone() {
                        *levels.get_mut(xx, yy) += t.classify(*y.get(xx, yy)) as u32;
                    }
                }
            }
        }
    }
    levels
}

/// Definite foreground (1), definite background (0), ambiguous (0.5).
#[derive(Debug, Clone, PartialEq)]
pub struct Trimap {
    pub values: ScalarMap,
    pub levels: Grid<u32>,
}

pub fn build_trimap(levels: &Grid<u32>, theta1: u32, theta2: u32) -> Result<Trimap> {
    if theta1 <= theta2 {
        return Err(Error::BadThresholds { theta1, theta2 });
    }
    let values = levels.map(|&l| {
        if l >= theta1 {
            1.0
        } else if l <= theta2 {
            0.0
        } else {
            0.5
        }
    });
    Ok(Trimap {
        values,
        levels: levels.clone(),
    })
}
