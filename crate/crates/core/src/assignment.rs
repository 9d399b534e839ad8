//! Minimum-cost one-to-one assignment (Hungarian method with potentials).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    /// Sum of the paired costs, added in row order.
    pub total_cost: f64,
}

/// Minimum-cost matching of `min(n, m)` pairs. Rectangular inputs are padded
/// to square with a constant sentinel larger than every real cost; pairs that
/// land on padding are dropped.
pub fn hungarian_match(cost: &[Vec<f64>]) -> Result<Assignment> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyMatrix);
    }
    if cost.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidConfig("cost matrix rows differ in length".into()));
    }
    if let Some((i, j)) = cost
        .iter()
        .enumerate()
        .find_map(|(i, r)| r.iter().position(|c| !c.is_finite()).map(|j| (i, j)))
    {
        return Err(Error::InvalidConfig(format!("non-finite cost at ({i}, {j})")));
    }
    let n = rows.max(cols);
    let max = cost.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let sentinel = max.abs() + 1.0;
    let a = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            cost[i][j]
        } else {
            sentinel
        }
    };

    // 1-based potentials formulation; p[j] is the row matched to column j
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=n)
        .filter(|&j| p[j] >= 1 && p[j] - 1 < rows && j - 1 < cols)
        .map(|j| (p[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    let total_cost = pairs.iter().map(|&(i, j)| cost[i][j]).sum();
    Ok(Assignment { pairs, total_cost })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for k in 0..n {
                let mut q = p.clone();
                q.insert(k, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn examples() {
        let id = vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
        let a = hungarian_match(&id).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(a.total_cost, 0.0);
        let a = hungarian_match(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost, 2.0);
        assert!(matches!(hungarian_match(&[]), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn rectangular_drops_padding() {
        let wide = vec![vec![5.0, 1.0, 9.0]];
        assert_eq!(hungarian_match(&wide).unwrap().pairs, vec![(0, 1)]);
        let tall = vec![vec![5.0], vec![1.0], vec![9.0]];
        let a = hungarian_match(&tall).unwrap();
        assert_eq!(a.pairs, vec![(1, 0)]);
        assert_eq!(a.total_cost, 1.0);
    }

    proptest! {
        #[test]
        fn matches_permutation_enumeration(n in 1usize..=6, vals in proptest::collection::vec(0.0f64..10.0, 36)) {
            let cost: Vec<Vec<f64>> = (0..n).map(|i| vals[i * n..(i + 1) * n].to_vec()).collect();
            let a = hungarian_match(&cost).unwrap();
            let best = permutations(n)
                .iter()
                .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            prop_assert_eq!(a.total_cost, best);
            prop_assert_eq!(a.pairs.len(), n);
        }
    }
}
