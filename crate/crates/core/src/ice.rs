//! Interactively constrained encoding: motion constrained by appearance,
//! appearance constrained by motion, and their normalised fusion.

use crate::error::Result;
use crate::grid::ScalarMap;
use crate::proposals::AccumulatedStrengths;
use crate::saliency::SaliencyMap;
use crate::trimap::Trimap;

#[derive(Debug, Clone, PartialEq)]
pub struct IceMap {
    pub m: ScalarMap,
    pub m_c: ScalarMap,
    pub m_rgb: ScalarMap,
}

/// `M_C = G + I + alpha * Y_C + beta * T`, with `G` and `I` min-max normalised first.
pub fn appearance_constrained_motion(
    strengths: &AccumulatedStrengths,
    saliency: &SaliencyMap,
    trimap: &Trimap,
    alpha: f64,
    beta: f64,
) -> Result<ScalarMap> {
    let base = motion_constrained_appearance(strengths, saliency, alpha)?;
    base.zip_map(&trimap.values, |m, t| m + beta * t)
}

/// `M_RGB = G + I + alpha * Y_RGB`, with `G` and `I` min-max normalised first.
pub fn motion_constrained_appearance(
    strengths: &AccumulatedStrengths,
    saliency: &SaliencyMap,
    alpha: f64,
) -> Result<ScalarMap> {
    let g = strengths.g_acc.normalized(0.0);
    let i = strengths.i_acc.normalized(0.0);
    g.zip_map(&i, |a, b| a + b)?
        .zip_map(&saliency.values, |gi, y| gi + alpha * y)
}

/// `M = minmax(M_C + M_RGB)`; a flat sum yields an all-zero map.
pub fn fuse_ice(m_c: &ScalarMap, m_rgb: &ScalarMap) -> Result<IceMap> {
    let sum = m_c.zip_map(m_rgb, |a, b| a + b)?;
    Ok(IceMap {
        m: sum.normalized(0.0),
        m_c: m_c.clone(),
        m_rgb: m_rgb.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::proposals::Space;
    use crate::saliency::SaliencySource;
    use proptest::prelude::*;

    fn strengths(g: f64, i: f64) -> AccumulatedStrengths {
        AccumulatedStrengths {
            g_acc: Grid::filled(4, 3, g),
            i_acc: Grid::filled(4, 3, i),
            space: Space::C,
        }
    }

    fn sal(v: f64) -> SaliencyMap {
        SaliencyMap {
            values: Grid::filled(4, 3, v),
            source: SaliencySource::C,
        }
    }

    fn tri(v: f64) -> Trimap {
        Trimap {
            values: Grid::filled(4, 3, v),
            levels: Grid::new(4, 3),
        }
    }

    /// Strength rasters with a single peak so normalisation maps them to {0, 1}.
    fn peaked() -> AccumulatedStrengths {
        let mut g = Grid::filled(4, 3, 0.0);
        g.set(0, 0, 5.0);
        let mut s = strengths(0.0, 0.0);
        s.g_acc = g.clone();
        s.i_acc = g;
        s
    }

    #[test]
    fn motion_map_examples() {
        let m = appearance_constrained_motion(&strengths(0.0, 0.0), &sal(0.0), &tri(0.0), 0.9, 0.5).unwrap();
        assert!(m.iter().all(|&v| v == 0.0));
        let m = appearance_constrained_motion(&strengths(0.0, 0.0), &sal(0.0), &tri(1.0), 0.9, 0.5).unwrap();
        assert!(m.iter().all(|&v| v == 0.5));
        let m = appearance_constrained_motion(&peaked(), &sal(1.0), &tri(1.0), 0.9, 0.5).unwrap();
        assert!((m.get(0, 0) - 3.4).abs() < 1e-12);
    }

    #[test]
    fn appearance_map_examples() {
        let m = motion_constrained_appearance(&strengths(0.0, 0.0), &sal(0.0), 0.9).unwrap();
        assert!(m.iter().all(|&v| v == 0.0));
        let m = motion_constrained_appearance(&strengths(0.0, 0.0), &sal(1.0), 0.9).unwrap();
        assert!(m.iter().all(|&v| (v - 0.9).abs() < 1e-12));
        let mut s = strengths(0.0, 0.0);
        s.g_acc.set(1, 1, 2.0);
        s.i_acc.set(1, 1, 4.0);
        let m = motion_constrained_appearance(&s, &sal(0.0), 0.9).unwrap();
        assert_eq!(*m.get(1, 1), 2.0);
        assert_eq!(*m.get(0, 0), 0.0);
    }

    #[test]
    fn fuse_examples() {
        let c = Grid::filled(3, 3, 0.7);
        assert!(fuse_ice(&c, &c).unwrap().m.iter().all(|&v| v == 0.0));
        let a = Grid::from_vec(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let z = Grid::filled(3, 1, 0.0);
        assert_eq!(fuse_ice(&a, &z).unwrap().m.as_slice(), &[0.0, 0.5, 1.0]);
        assert!(fuse_ice(&a, &Grid::filled(2, 1, 0.0)).is_err());
    }

    proptest! {
        #[test]
        fn fuse_is_bounded_monotone_and_symmetric(
            a in proptest::collection::vec(-5.0f64..5.0, 20),
            b in proptest::collection::vec(-5.0f64..5.0, 20),
        ) {
            let ga = Grid::from_vec(5, 4, a.clone()).unwrap();
            let gb = Grid::from_vec(5, 4, b.clone()).unwrap();
            let f = fuse_ice(&ga, &gb).unwrap();
            prop_assert_eq!(&f.m, &fuse_ice(&gb, &ga).unwrap().m);
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            for i in 0..20 {
                let mi = f.m.as_slice()[i];
                prop_assert!((0.0..=1.0).contains(&mi));
                for j in 0..20 {
                    if sum[i] < sum[j] {
                        prop_assert!(mi <= f.m.as_slice()[j]);
                    }
                }
            }
        }
    }
}
