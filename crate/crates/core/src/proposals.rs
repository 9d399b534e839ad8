//! Object proposals scored by optical-flow boundary strength `G` and
//! intensity strength `I`, and accumulated into per-pixel strength rasters.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::color::rgb_to_lab;
use crate::error::{Error, Result};
use crate::grid::{Grid, Mask, ScalarMap};
use crate::superpixels::{spatial_neighbors, SuperpixelMap};

/// Pixels of `mask` with an off-mask 8-neighbour or on the image border.
pub fn interior_boundary(mask: &Mask) -> Mask {
    let (w, h) = mask.dims();
    Grid::from_fn(w, h, |x, y| {
        *mask.get(x, y)
            && (x == 0
                || y == 0
                || x + 1 == w
                || y + 1 == h
                || mask.neighbors8(x, y).any(|(nx, ny)| !*mask.get(nx, ny)))
    })
}

/// A candidate object region with its boundary and flow strengths.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    mask: Mask,
    boundary: Mask,
    area: usize,
    perimeter: usize,
}

impl Proposal {
    pub fn from_mask(mask: Mask) -> Result<Self> {
        let area = mask.count();
        if area == 0 {
            return Err(Error::EmptyMask);
        }
        let boundary = interior_boundary(&mask);
        let perimeter = boundary.count();
        Ok(Self {
            mask,
            boundary,
            area,
            perimeter,
        })
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn boundary(&self) -> &Mask {
        &self.boundary
    }

    pub fn area(&self) -> usize {
        self.area
    }

    pub fn perimeter(&self) -> usize {
        self.perimeter
    }

    /// Bounding box `(x0, y0, x1, y1)`, inclusive.
    pub fn bbox(&self) -> (usize, usize, usize, usize) {
        let (w, h) = self.mask.dims();
        let mut b = (w, h, 0, 0);
        for y in 0..h {
            for x in 0..w {
                if *self.mask.get(x, y) {
                    b = (b.0.min(x), b.1.min(y), b.2.max(x), b.3.max(y));
                }
            }
        }
        b
    }

    pub fn centroid(&self) -> (f64, f64) {
        let (w, h) = self.mask.dims();
        let (mut sx, mut sy) = (0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                if *self.mask.get(x, y) {
                    sx += x as f64;
                    sy += y as f64;
                }
            }
        }
        (sx / self.area as f64, sy / self.area as f64)
    }
}

/// Mean of `edges` over the proposal boundary.
pub fn boundary_strength(p: &Proposal, edges: &ScalarMap) -> Result<f64> {
    p.mask.ensure_same_dims(edges)?;
    if p.perimeter == 0 {
        return Err(Error::EmptyBoundary);
    }
    let sum: f64 = p
        .boundary
        .iter()
        .zip(edges.iter())
        .filter(|(b, _)| **b)
        .map(|(_, e)| *e)
        .sum();
    Ok(sum / p.perimeter as f64)
}

/// Mean of `intensity` over the proposal mask.
pub fn intensity_strength(p: &Proposal, intensity: &ScalarMap) -> Result<f64> {
    p.mask.ensure_same_dims(intensity)?;
    if p.area == 0 {
        return Err(Error::EmptyMask);
    }
    let sum: f64 = p
        .mask
        .iter()
        .zip(intensity.iter())
        .filter(|(m, _)| **m)
        .map(|(_, v)| *v)
        .sum();
    Ok(sum / p.area as f64)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProposalSet {
    dims: (usize, usize),
    pub proposals: Vec<Proposal>,
}

impl ProposalSet {
    pub fn new(dims: (usize, usize), proposals: Vec<Proposal>) -> Self {
        Self { dims, proposals }
    }

    pub fn empty(dims: (usize, usize)) -> Self {
        Self::new(dims, Vec::new())
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.proposals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proposals.is_empty()
    }

    /// `(G, I)` for every proposal.
    pub fn strengths(&self, edges: &ScalarMap, intensity: &ScalarMap) -> Result<Vec<(f64, f64)>> {
        self.proposals
            .iter()
            .map(|p| Ok((boundary_strength(p, edges)?, intensity_strength(p, intensity)?)))
            .collect()
    }

    /// Keeps the `k` proposals with the largest `G + I` (ties keep the earlier one).
    pub fn top_k(&self, k: usize, edges: &ScalarMap, intensity: &ScalarMap) -> Result<ProposalSet> {
        let s = self.strengths(edges, intensity)?;
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| (s[b].0 + s[b].1).total_cmp(&(s[a].0 + s[a].1)).then(a.cmp(&b)));
        order.truncate(k);
        order.sort_unstable();
        Ok(ProposalSet::new(
            self.dims,
            order.into_iter().map(|i| self.proposals[i].clone()).collect(),
        ))
    }
}

/// Which per-proposal raster carries the proposal's score into the sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccumulationMode {
    /// Score painted on the proposal boundary only.
    BoundaryOnB,
    /// Score painted on the whole proposal region.
    BoundaryOnD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    C,
    Rgb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccumulatedStrengths {
    pub g_acc: ScalarMap,
    pub i_acc: ScalarMap,
    pub space: Space,
}

/// `G_acc = sum_r mask_r * G(P_r)`, `I_acc = sum_r mask_r * I(P_r)`, summed in
/// proposal order so the result is reproducible.
pub fn accumulate(
    set: &ProposalSet,
    edges: &ScalarMap,
    intensity: &ScalarMap,
    mode: AccumulationMode,
    space: Space,
) -> Result<AccumulatedStrengths> {
    let (w, h) = set.dims;
    edges.ensure_same_dims(intensity)?;
    if edges.dims() != set.dims {
        return Err(Error::DimensionMismatch {
            expected: set.dims,
            found: edges.dims(),
        });
    }
    let mut g_acc = Grid::new(w, h);
    let mut i_acc = Grid::new(w, h);
    for p in &set.proposals {
        let g = boundary_strength(p, edges)?;
        let i = intensity_strength(p, intensity)?;
        let carrier = match mode {
            AccumulationMode::BoundaryOnB => &p.boundary,
            AccumulationMode::BoundaryOnD => &p.mask,
        };
        for ((on, ga), ia) in carrier
            .iter()
            .zip(g_acc.as_mut_slice().iter_mut())
            .zip(i_acc.as_mut_slice().iter_mut())
        {
            if *on {
                *ga += g;
                *ia += i;
            }
        }
    }
    Ok(AccumulatedStrengths { g_acc, i_acc, space })
}

/// Groups superpixels by single-linkage merging of adjacent superpixels in
/// order of mean-LAB distance until `n_target` groups remain. Returns those
/// groups followed by every superpixel that is not already one of them.
pub fn generate_fallback_proposals(image: &RgbImage, sp: &SuperpixelMap, n_target: usize) -> Result<ProposalSet> {
    let dims = sp.dims();
    if (image.width() as usize, image.height() as usize) != dims {
        return Err(Error::DimensionMismatch {
            expected: dims,
            found: (image.width() as usize, image.height() as usize),
        });
    }
    let n = sp.len();
    let mut mean = vec![[0f64; 3]; n];
    let mut count = vec![0usize; n];
    for (i, p) in image.pixels().enumerate() {
        let l = sp.labels.as_slice()[i] as usize;
        let c = rgb_to_lab(p[0], p[1], p[2]);
        for k in 0..3 {
            mean[l][k] += c[k];
        }
        count[l] += 1;
    }
    for (m, &c) in mean.iter_mut().zip(&count) {
        *m = m.map(|v| v / c.max(1) as f64);
    }
    let adj = spatial_neighbors(sp);
    let mut edges: Vec<(f64, usize, usize)> = adj
        .edges()
        .map(|(p, q, _)| {
            let d = (0..3).map(|k| (mean[p][k] - mean[q][k]).powi(2)).sum::<f64>().sqrt();
            (d, p, q)
        })
        .collect();
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut uf = UnionFind::new(n);
    let mut groups = n;
    for &(_, p, q) in &edges {
        if groups <= n_target.max(1) {
            break;
        }
        if uf.union(p, q) {
            groups -= 1;
        }
    }
    // groups in order of their smallest member label
    let mut group_of_root = vec![usize::MAX; n];
    let mut group_members: Vec<Vec<usize>> = Vec::new();
    for l in 0..n {
        let r = uf.find(l);
        if group_of_root[r] == usize::MAX {
            group_of_root[r] = group_members.len();
            group_members.push(Vec::new());
        }
        group_members[group_of_root[r]].push(l);
    }
    let label_mask = |members: &[usize]| {
        let mut sel = vec![false; n];
        for &m in members {
            sel[m] = true;
        }
        sp.labels.map(|&l| sel[l as usize])
    };
    let mut proposals = Vec::with_capacity(group_members.len() + n);
    for members in &group_members {
        proposals.push(Proposal::from_mask(label_mask(members))?);
    }
    for l in 0..n {
        let root = uf.find(l);
        if group_members[group_of_root[root]].len() > 1 {
            proposals.push(Proposal::from_mask(label_mask(&[l]))?);
        }
    }
    Ok(ProposalSet::new(dims, proposals))
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Joins the two sets, keeping the smaller root. Returns false if already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        self.parent[hi] = lo;
        true
    }
}
