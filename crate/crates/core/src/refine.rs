//! Spatiotemporal superpixel graph energy and its exact minimisation by s-t
//! min-cut. Label 1 is foreground (source side), 0 is background.

use log::warn;

use crate::config::EnergyModel;
use crate::descriptors::{histogram_distance, NodeHistogram};
use crate::error::{Error, Result};
use crate::grid::{Grid, Mask, ScalarMap};
use crate::maxflow::FlowNetwork;
use crate::superpixels::{Adjacency, SuperpixelMap, TemporalLink};

/// `-log(1 - M)` for background, `-log(M)` for foreground, with `M` clamped
/// to `[eps, 1 - eps]`.
pub fn unary_ice(m_p: f64, label: u8, eps: f64) -> f64 {
    let m = m_p.clamp(eps, 1.0 - eps);
    if label == 0 {
        -(1.0 - m).ln()
    } else {
        -m.ln()
    }
}

/// Pooled appearance of the initial foreground and background superpixels.
#[derive(Debug, Clone, PartialEq)]
pub struct FgBgModels {
    pub fg: Option<NodeHistogram>,
    pub bg: Option<NodeHistogram>,
}

impl FgBgModels {
    pub fn pool<'a>(nodes: impl IntoIterator<Item = (&'a NodeHistogram, u8)>) -> Result<Self> {
        let mut fg: Option<NodeHistogram> = None;
        let mut bg: Option<NodeHistogram> = None;
        for (h, l) in nodes {
            let slot = if l == 1 { &mut fg } else { &mut bg };
            match slot {
                Some(acc) => acc.add_scaled(h, 1.0)?,
                None => *slot = Some(h.clone()),
            }
        }
        for m in [&mut fg, &mut bg].into_iter().flatten() {
            m.normalize();
        }
        Ok(Self { fg, bg })
    }

    pub fn is_complete(&self) -> bool {
        self.fg.is_some() && self.bg.is_some()
    }
}

/// `1 - D(H_p, fg)` for background, `1 - D(H_p, bg)` for foreground.
pub fn unary_hist(h_p: &NodeHistogram, label: u8, models: &FgBgModels) -> Result<f64> {
    let model = if label == 0 { &models.fg } else { &models.bg };
    let model = model
        .as_ref()
        .ok_or_else(|| Error::Invariant("appearance model missing for histogram unary".into()))?;
    Ok(1.0 - histogram_distance(h_p, model)?)
}

/// Shared boundary over the shorter perimeter when labels differ, else 0.
pub fn boundary_connectivity(shared: usize, perim_p: usize, perim_q: usize, lp: u8, lq: u8) -> f64 {
    if lp == lq {
        return 0.0;
    }
    let m = perim_p.min(perim_q);
    if m == 0 {
        0.0
    } else {
        shared as f64 / m as f64
    }
}

pub fn pairwise_spatial(distance: f64, connectivity: f64, lp: u8, lq: u8) -> f64 {
    if lp == lq {
        0.0
    } else {
        1.0 - distance + connectivity
    }
}

pub fn pairwise_temporal(distance: f64, lp: u8, lr: u8) -> f64 {
    if lp == lr {
        0.0
    } else {
        1.0 - distance
    }
}

/// A pair charged `coef` when its labels differ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PottsEdge {
    pub p: usize,
    pub q: usize,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyGraph {
    /// Per node, the unary cost of labels 0 and 1.
    pub unary: Vec<[f64; 2]>,
    pub spatial: Vec<PottsEdge>,
    pub temporal: Vec<PottsEdge>,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl EnergyGraph {
    pub fn len(&self) -> usize {
        self.unary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unary.is_empty()
    }
}

/// Sum of unaries, plus `lambda1` times the spatial and `lambda2` times the
/// temporal Potts sums, each edge counted once. Terms are added in node and
/// edge order.
pub fn total_energy(g: &EnergyGraph, labels: &[u8]) -> f64 {
    let unary: f64 = g.unary.iter().zip(labels).map(|(u, &l)| u[l as usize]).sum();
    let potts = |edges: &[PottsEdge]| -> f64 {
        edges
            .iter()
            .filter(|e| labels[e.p] != labels[e.q])
            .map(|e| e.coef)
            .sum()
    };
    unary + g.lambda1 * potts(&g.spatial) + g.lambda2 * potts(&g.temporal)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimization {
    pub labels: Vec<u8>,
    pub energy: f64,
    pub flow: f64,
    /// Every node's unary favours background.
    pub no_foreground_evidence: bool,
}

/// Exact minimiser of the Potts energy via Dinic max-flow.
pub fn minimize_energy(g: &EnergyGraph) -> Result<Minimization> {
    let n = g.len();
    let (s, t) = (n, n + 1);
    let mut net = FlowNetwork::new(n + 2);
    for (p, u) in g.unary.iter().enumerate() {
        if !(u[0].is_finite() && u[1].is_finite()) {
            return Err(Error::Invariant(format!("non-finite unary at node {p}")));
        }
        let base = u[0].min(u[1]);
        let (c0, c1) = (u[0] - base, u[1] - base);
        if c0 > 0.0 {
            net.add_edge(s, p, c0, 0.0);
        }
        if c1 > 0.0 {
            net.add_edge(p, t, c1, 0.0);
        }
    }
    for (edges, lambda) in [(&g.spatial, g.lambda1), (&g.temporal, g.lambda2)] {
        for e in edges {
            if e.coef < 0.0 || !e.coef.is_finite() {
                return Err(Error::Invariant(format!("negative pairwise coefficient on ({}, {})", e.p, e.q)));
            }
            let c = lambda * e.coef;
            if c > 0.0 && e.p != e.q {
                net.add_edge(e.p, e.q, c, c);
            }
        }
    }
    let flow = net.max_flow(s, t);
    net.audit(s, t, flow)?;
    let side = net.source_side(s);
    let labels: Vec<u8> = side[..n].iter().map(|&b| b as u8).collect();
    let no_foreground_evidence = n > 0 && g.unary.iter().all(|u| u[1] >= u[0]);
    if no_foreground_evidence {
        warn!("no node favours foreground; refinement yields all background");
    }
    Ok(Minimization {
        energy: total_energy(g, &labels),
        labels,
        flow,
        no_foreground_evidence,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub labels: Vec<u8>,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub no_foreground_evidence: bool,
    /// The initial labelling was already at least as good as the cut.
    pub kept_initial: bool,
}

/// Minimises the energy and keeps whichever of the cut and the initial
/// labelling is lower, so the energy never increases.
pub fn refine_labels(g: &EnergyGraph, init: &[u8]) -> Result<Refinement> {
    if init.len() != g.len() {
        return Err(Error::Invariant(format!(
            "{} initial labels for {} nodes",
            init.len(),
            g.len()
        )));
    }
    let initial_energy = total_energy(g, init);
    let m = minimize_energy(g)?;
    let kept_initial = m.energy > initial_energy;
    let (labels, final_energy) = if kept_initial {
        (init.to_vec(), initial_energy)
    } else {
        (m.labels, m.energy)
    };
    Ok(Refinement {
        labels,
        initial_energy,
        final_energy,
        no_foreground_evidence: m.no_foreground_evidence,
        kept_initial,
    })
}

/// Mean of a raster over each superpixel.
pub fn node_means(map: &ScalarMap, sp: &SuperpixelMap) -> Vec<f64> {
    let mut sum = vec![0.0; sp.len()];
    for (v, &l) in map.iter().zip(sp.labels.iter()) {
        sum[l as usize] += v;
    }
    sum.iter().zip(&sp.stats).map(|(s, st)| s / st.area as f64).collect()
}

/// A superpixel starts as foreground when at least half its pixels are.
pub fn initial_node_labels(mask: &Mask, sp: &SuperpixelMap) -> Vec<u8> {
    let mut fg = vec![0usize; sp.len()];
    for (&m, &l) in mask.iter().zip(sp.labels.iter()) {
        if m {
            fg[l as usize] += 1;
        }
    }
    fg.iter().zip(&sp.stats).map(|(&f, st)| (2 * f >= st.area) as u8).collect()
}

pub fn labels_to_mask(labels: &[u8], sp: &SuperpixelMap) -> Mask {
    sp.labels.map(|&l| labels[l as usize] == 1)
}

/// Per-frame inputs to graph assembly.
pub struct FrameNodes<'a> {
    pub sp: &'a SuperpixelMap,
    pub adj: &'a Adjacency,
    /// Neighbour-weighted pools, used by the histogram unary.
    pub hists: &'a [NodeHistogram],
    /// Unweighted pools, used by the spatial and temporal contrast terms.
    pub raw_hists: &'a [NodeHistogram],
    /// Node likelihood values in `[0, 1]`.
    pub likelihood: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GraphSettings {
    pub model: EnergyModel,
    pub lambda1: f64,
    pub lambda2: f64,
    pub clamp_eps: f64,
    pub per_frame_models: bool,
}

#[derive(Debug, Clone)]
pub struct AssembledGraph {
    pub graph: EnergyGraph,
    /// Index of each frame's first node.
    pub offsets: Vec<usize>,
    /// The histogram unary was dropped because one initial class was empty.
    pub histogram_unary_dropped: bool,
}

/// Builds the sequence graph. `links[i]` holds temporal overlaps between
/// frames `i` and `i + 1`.
pub fn assemble_graph(
    frames: &[FrameNodes],
    links: &[Vec<TemporalLink>],
    init: &[Vec<u8>],
    settings: &GraphSettings,
) -> Result<AssembledGraph> {
    if links.len() + 1 != frames.len().max(1) || init.len() != frames.len() {
        return Err(Error::Invariant("frame, link and label counts disagree".into()));
    }
    let mut offsets = Vec::with_capacity(frames.len());
    let mut n = 0;
    for f in frames {
        offsets.push(n);
        n += f.sp.len();
    }
    let full = settings.model == EnergyModel::Full;
    let global = FgBgModels::pool(
        frames
            .iter()
            .zip(init)
            .flat_map(|(f, l)| f.hists.iter().zip(l.iter().copied())),
    )?;
    let mut dropped = false;
    if full && !global.is_complete() {
        warn!("initialization lacks a foreground or background class; histogram unary dropped");
        dropped = true;
    }
    let mut unary = Vec::with_capacity(n);
    let mut spatial = Vec::new();
    for (fi, f) in frames.iter().enumerate() {
        let local;
        let models = if settings.per_frame_models {
            local = FgBgModels::pool(f.hists.iter().zip(init[fi].iter().copied()))?;
            if local.is_complete() {
                &local
            } else {
                &global
            }
        } else {
            &global
        };
        for p in 0..f.sp.len() {
            let m = f.likelihood[p];
            let mut u = [unary_ice(m, 0, settings.clamp_eps), unary_ice(m, 1, settings.clamp_eps)];
            if full && !dropped {
                u[0] += unary_hist(&f.hists[p], 0, models)?;
                u[1] += unary_hist(&f.hists[p], 1, models)?;
            }
            unary.push(u);
        }
        for (p, q, shared) in f.adj.edges() {
            let coef = if full {
                let d = histogram_distance(&f.raw_hists[p], &f.raw_hists[q])?;
                let c = boundary_connectivity(shared, f.sp.stats[p].perimeter, f.sp.stats[q].perimeter, 0, 1);
                pairwise_spatial(d, c, 0, 1)
            } else {
                1.0 - (f.likelihood[p] - f.likelihood[q]).abs()
            };
            spatial.push(PottsEdge {
                p: offsets[fi] + p,
                q: offsets[fi] + q,
                coef,
            });
        }
    }
    let mut temporal = Vec::new();
    for (i, ls) in links.iter().enumerate() {
        let (a, b) = (&frames[i], &frames[i + 1]);
        for l in ls {
            let coef = if full {
                pairwise_temporal(histogram_distance(&a.raw_hists[l.p], &b.raw_hists[l.r])?, 0, 1)
            } else {
                1.0 - (a.likelihood[l.p] - b.likelihood[l.r]).abs()
            };
            temporal.push(PottsEdge {
                p: offsets[i] + l.p,
                q: offsets[i + 1] + l.r,
                coef,
            });
        }
    }
    Ok(AssembledGraph {
        graph: EnergyGraph {
            unary,
            spatial,
            temporal,
            lambda1: settings.lambda1,
            lambda2: settings.lambda2,
        },
        offsets,
        histogram_unary_dropped: dropped,
    })
}

/// Splits sequence labels back into per-frame masks.
pub fn frame_masks(labels: &[u8], frames: &[&SuperpixelMap], offsets: &[usize]) -> Vec<Mask> {
    frames
        .iter()
        .zip(offsets)
        .map(|(sp, &o)| labels_to_mask(&labels[o..o + sp.len()], sp))
        .collect()
}

/// Raster of per-node values painted onto the pixels.
pub fn paint_nodes(values: &[f64], sp: &SuperpixelMap) -> ScalarMap {
    let (w, h) = sp.dims();
    Grid::from_fn(w, h, |x, y| values[sp.label(x, y)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(g: &EnergyGraph) -> f64 {
        let n = g.len();
        (0..1u32 << n)
            .map(|mask| {
                let l: Vec<u8> = (0..n).map(|i| (mask >> i & 1) as u8).collect();
                total_energy(g, &l)
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn unary_ice_examples() {
        let e = 1e-6;
        assert_eq!(unary_ice(0.5, 0, e), unary_ice(0.5, 1, e));
        assert!((unary_ice(0.8, 1, e) - 0.2231).abs() < 1e-4);
        assert!((unary_ice(0.8, 0, e) - 1.6094).abs() < 1e-4);
        assert!(unary_ice(1.0, 1, e) < 1e-5);
        assert!(unary_ice(1.0, 0, e) > 13.0);
        assert!(unary_ice(0.0, 1, e).is_finite());
    }

    #[test]
    fn pairwise_examples() {
        assert_eq!(boundary_connectivity(4, 4, 12, 0, 0), 0.0);
        assert_eq!(boundary_connectivity(4, 4, 12, 0, 1), 1.0);
        assert_eq!(boundary_connectivity(3, 12, 8, 1, 0), 3.0 / 8.0);
        assert_eq!(pairwise_spatial(0.4, 0.25, 0, 0), 0.0);
        assert!((pairwise_spatial(0.4, 0.25, 0, 1) - 0.85).abs() < 1e-12);
        assert_eq!(pairwise_spatial(0.0, 1.0, 1, 0), 2.0);
        assert_eq!(pairwise_temporal(0.35, 1, 1), 0.0);
        assert!((pairwise_temporal(0.35, 0, 1) - 0.65).abs() < 1e-12);
    }

    #[test]
    fn unary_hist_examples() {
        let h = |v: Vec<f64>| NodeHistogram {
            bow_sift: v.clone(),
            bow_rgb: v.clone(),
            color_names: v.clone(),
            color_concat: v,
        };
        let a = h(vec![1.0, 0.0]);
        let b = h(vec![0.0, 1.0]);
        let models = FgBgModels {
            fg: Some(a.clone()),
            bg: Some(b.clone()),
        };
        assert_eq!(unary_hist(&a, 0, &models).unwrap(), 1.0);
        assert_eq!(unary_hist(&a, 1, &models).unwrap(), 0.0);
        let far = FgBgModels {
            fg: Some(h(vec![1.0, 0.0, 0.0])),
            bg: Some(h(vec![0.0, 1.0, 0.0])),
        };
        let x = h(vec![0.0, 0.0, 1.0]);
        assert_eq!(unary_hist(&x, 0, &far).unwrap(), 0.0);
        assert_eq!(unary_hist(&x, 1, &far).unwrap(), 0.0);
        let pooled = FgBgModels::pool([(&a, 1u8), (&b, 1u8)]).unwrap();
        assert!(pooled.bg.is_none());
        assert_eq!(pooled.fg.unwrap().bow_sift, vec![0.5, 0.5]);
    }

    #[test]
    fn single_node_and_pair() {
        let g = EnergyGraph {
            unary: vec![[1.0, 0.2]],
            spatial: vec![],
            temporal: vec![],
            lambda1: 3.0,
            lambda2: 2.0,
        };
        assert_eq!(minimize_energy(&g).unwrap().labels, vec![1]);
        // strong coupling: both follow the stronger unary (node 1 prefers background more)
        let g = EnergyGraph {
            unary: vec![[0.3, 0.0], [0.0, 0.5]],
            spatial: vec![PottsEdge { p: 0, q: 1, coef: 100.0 }],
            temporal: vec![],
            lambda1: 3.0,
            lambda2: 2.0,
        };
        let m = minimize_energy(&g).unwrap();
        assert_eq!(m.labels, vec![0, 0]);
        assert_eq!(m.energy, brute_force(&g));
    }

    #[test]
    fn no_foreground_evidence_flag() {
        let g = EnergyGraph {
            unary: vec![[0.1, 0.5], [0.2, 0.2]],
            spatial: vec![PottsEdge { p: 0, q: 1, coef: 1.0 }],
            temporal: vec![],
            lambda1: 3.0,
            lambda2: 2.0,
        };
        let m = minimize_energy(&g).unwrap();
        assert!(m.no_foreground_evidence);
        assert_eq!(m.labels, vec![0, 0]);
    }

    #[test]
    fn refine_never_increases_energy() {
        let g = EnergyGraph {
            unary: vec![[2.0, 0.1], [0.1, 2.0], [1.0, 1.1]],
            spatial: vec![PottsEdge { p: 0, q: 2, coef: 0.5 }],
            temporal: vec![PottsEdge { p: 1, q: 2, coef: 0.3 }],
            lambda1: 3.0,
            lambda2: 2.0,
        };
        for init in [vec![0, 0, 0], vec![1, 0, 1], vec![1, 1, 1]] {
            let r = refine_labels(&g, &init).unwrap();
            assert!(r.final_energy <= r.initial_energy);
            assert_eq!(r.final_energy, brute_force(&g));
        }
    }

    #[test]
    fn contrast_terms_use_raw_pools() {
        use crate::superpixels::{spatial_neighbors, temporal_neighbors};
        let img = image::RgbImage::new(4, 2);
        let labels = Grid::from_fn(4, 2, |x, _| (x >= 2) as u32);
        let sp = SuperpixelMap::from_labels(&img, &labels).unwrap();
        let adj = spatial_neighbors(&sp);
        let h = |v: Vec<f64>| NodeHistogram {
            bow_sift: v.clone(),
            bow_rgb: v.clone(),
            color_names: v.clone(),
            color_concat: v,
        };
        let smooth = vec![h(vec![0.5, 0.5]), h(vec![0.5, 0.5])];
        let raw = vec![h(vec![1.0, 0.0]), h(vec![0.0, 1.0])];
        let frame = || FrameNodes {
            sp: &sp,
            adj: &adj,
            hists: &smooth,
            raw_hists: &raw,
            likelihood: vec![0.9, 0.1],
        };
        let links = vec![temporal_neighbors(&sp, &sp).unwrap()];
        let settings = GraphSettings {
            model: EnergyModel::Full,
            lambda1: 3.0,
            lambda2: 2.0,
            clamp_eps: 1e-6,
            per_frame_models: false,
        };
        let a = assemble_graph(&[frame(), frame()], &links, &[vec![1, 0], vec![1, 0]], &settings).unwrap();
        let c = boundary_connectivity(2, sp.stats[0].perimeter, sp.stats[1].perimeter, 0, 1);
        assert_eq!(a.graph.spatial[0].coef, c);
        let cross: Vec<f64> = a.graph.temporal.iter().filter(|e| e.p % 2 != e.q % 2).map(|e| e.coef).collect();
        assert!(cross.iter().all(|&c| c == 0.0));
        // the smoothed pools sit halfway between both models
        let u = a.graph.unary[0];
        assert!((u[0] - unary_ice(0.9, 0, 1e-6) - u[1] + unary_ice(0.9, 1, 1e-6)).abs() < 1e-12);
    }

    fn graph_strategy() -> impl Strategy<Value = EnergyGraph> {
        (1usize..=8).prop_flat_map(|n| {
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|p| (p + 1..n).map(move |q| (p, q))).collect();
            let m = pairs.len();
            (
                proptest::collection::vec([0.0f64..3.0, 0.0f64..3.0], n),
                proptest::collection::vec((0u8..3, 0.0f64..2.0), m),
            )
                .prop_map(move |(unary, kinds)| {
                    let mut spatial = Vec::new();
                    let mut temporal = Vec::new();
                    for (&(p, q), (k, coef)) in pairs.iter().zip(kinds) {
                        match k {
                            0 => spatial.push(PottsEdge { p, q, coef }),
                            1 => temporal.push(PottsEdge { p, q, coef }),
                            _ => {}
                        }
                    }
                    EnergyGraph {
                        unary,
                        spatial,
                        temporal,
                        lambda1: 3.0,
                        lambda2: 2.0,
                    }
                })
        })
    }

    proptest! {
        #[test]
        fn min_cut_matches_enumeration(g in graph_strategy()) {
            let m = minimize_energy(&g).unwrap();
            prop_assert_eq!(m.energy, brute_force(&g));
        }

        #[test]
        fn energy_matches_naive_sum(g in graph_strategy(), bits in any::<u16>()) {
            let l: Vec<u8> = (0..g.len()).map(|i| (bits >> i & 1) as u8).collect();
            let mut e = 0.0;
            for (p, u) in g.unary.iter().enumerate() {
                e += u[l[p] as usize];
            }
            for s in &g.spatial {
                e += g.lambda1 * pairwise_temporal(1.0 - s.coef, l[s.p], l[s.q]);
            }
            for t in &g.temporal {
                e += g.lambda2 * pairwise_temporal(1.0 - t.coef, l[t.p], l[t.q]);
            }
            prop_assert!((e - total_energy(&g, &l)).abs() < 1e-9);
        }
    }
}
