//! 8-connected component labelling of binary masks.

use std::collections::VecDeque;

use crate::grid::{Grid, Mask};

#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    /// 0 for background, `1..=count` for components in raster order of first pixel.
    pub labels: Grid<u32>,
    pub areas: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.areas.len()
    }

    pub fn mask(&self, id: u32) -> Mask {
        self.labels.map(|&l| l == id)
    }
}

pub fn label_components8(mask: &Mask) -> Components {
    let (w, h) = mask.dims();
    let mut labels = Grid::<u32>::new(w, h);
    let mut areas = Vec::new();
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if !*mask.get(x, y) || *labels.get(x, y) != 0 {
                continue;
            }
            let id = areas.len() as u32 + 1;
            let mut area = 0;
            labels.set(x, y, id);
            queue.push_back((x, y));
            while let Some((cx, cy)) = queue.pop_front() {
                area += 1;
                for (nx, ny) in mask.neighbors8(cx, cy) {
                    if *mask.get(nx, ny) && *labels.get(nx, ny) == 0 {
                        labels.set(nx, ny, id);
                        queue.push_back((nx, ny));
                    }
                }
            }
            areas.push(area);
        }
    }
    Components { labels, areas }
}

/// Drops components smaller than `min_area` and relabels the rest.
pub fn remove_small(mask: &Mask, min_area: usize) -> Mask {
    let c = label_components8(mask);
    c.labels.map(|&l| l != 0 && c.areas[l as usize - 1] >= min_area)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_count(mask: &Mask) -> usize {
        let (w, h) = mask.dims();
        let mut parent: Vec<usize> = (0..w * h).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for y in 0..h {
            for x in 0..w {
                if !mask.get(x, y) {
                    continue;
                }
                for (dx, dy) in [(1i64, 0i64), (0, 1), (1, 1), (-1, 1)] {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h && *mask.get(nx as usize, ny as usize) {
                        let a = find(&mut parent, y * w + x);
                        let b = find(&mut parent, ny as usize * w + nx as usize);
                        parent[a] = b;
                    }
                }
            }
        }
        let mut roots = std::collections::BTreeSet::new();
        for i in 0..w * h {
            if mask.as_slice()[i] {
                roots.insert(find(&mut parent, i));
            }
        }
        roots.len()
    }

    #[test]
    fn diagonal_pixels_connect() {
        let m = Mask::from_fn(3, 3, |x, y| x == y);
        let c = label_components8(&m);
        assert_eq!(c.count(), 1);
        assert_eq!(c.areas, vec![3]);
    }

    #[test]
    fn small_blobs_removed() {
        let m = Mask::from_fn(10, 10, |x, y| (x < 4 && y < 4) || (x == 8 && y == 8));
        let r = remove_small(&m, 2);
        assert_eq!(r.count(), 16);
        assert!(!r.get(8, 8));
    }

    proptest! {
        #[test]
        fn count_matches_union_find(bits in proptest::collection::vec(any::<bool>(), 64)) {
            let m = Mask::from_vec(8, 8, bits).unwrap();
            let c = label_components8(&m);
            prop_assert_eq!(c.count(), naive_count(&m));
            prop_assert_eq!(c.areas.iter().sum::<usize>(), m.count());
        }
    }
}
