//! Dinic max-flow on real capacities, with min-cut extraction and an audit
//! of the resulting flow.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Residual capacities at or below this are treated as saturated.
const RESIDUAL_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
struct Arc {
    to: usize,
    cap: f64,
    flow: f64,
    rev: usize,
}

impl Arc {
    fn residual(&self) -> f64 {
        self.cap - self.flow
    }
}

#[derive(Debug, Clone)]
pub struct FlowNetwork {
    arcs: Vec<Vec<Arc>>,
}

impl FlowNetwork {
    pub fn new(n: usize) -> Self {
        Self {
            arcs: vec![Vec::new(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.arcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }

    /// Adds `u -> v` with capacity `cap` and the reverse arc with `rev_cap`.
    pub fn add_edge(&mut self, u: usize, v: usize, cap: f64, rev_cap: f64) {
        debug_assert!(u != v && cap >= 0.0 && rev_cap >= 0.0);
        let ru = self.arcs[v].len();
        let rv = self.arcs[u].len();
        self.arcs[u].push(Arc {
            to: v,
            cap,
            flow: 0.0,
            rev: ru,
        });
        self.arcs[v].push(Arc {
            to: u,
            cap: rev_cap,
            flow: 0.0,
            rev: rv,
        });
    }

    fn levels(&self, s: usize, t: usize) -> Option<Vec<usize>> {
        let mut level = vec![usize::MAX; self.len()];
        level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for a in &self.arcs[u] {
                if a.residual() > RESIDUAL_EPS && level[a.to] == usize::MAX {
                    level[a.to] = level[u] + 1;
                    q.push_back(a.to);
                }
            }
        }
        (level[t] != usize::MAX).then_some(level)
    }

    fn push(&mut self, u: usize, t: usize, limit: f64, level: &[usize], next: &mut [usize]) -> f64 {
        if u == t {
            return limit;
        }
        while next[u] < self.arcs[u].len() {
            let i = next[u];
            let (to, res) = {
                let a = &self.arcs[u][i];
                (a.to, a.residual())
            };
            if res > RESIDUAL_EPS && level[to] == level[u] + 1 {
                let pushed = self.push(to, t, limit.min(res), level, next);
                if pushed > 0.0 {
                    let rev = self.arcs[u][i].rev;
                    self.arcs[u][i].flow += pushed;
                    self.arcs[to][rev].flow -= pushed;
                    return pushed;
                }
            }
            next[u] += 1;
        }
        0.0
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut total = 0.0;
        while let Some(level) = self.levels(s, t) {
            let mut next = vec![0; self.len()];
            loop {
                let f = self.push(s, t, f64::INFINITY, &level, &mut next);
                if f <= 0.0 {
                    break;
                }
                total += f;
            }
        }
        total
    }

    /// Nodes reachable from `s` in the residual graph.
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        seen[s] = true;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for a in &self.arcs[u] {
                if a.residual() > RESIDUAL_EPS && !seen[a.to] {
                    seen[a.to] = true;
                    q.push_back(a.to);
                }
            }
        }
        seen
    }

    /// Capacity of arcs leaving the given source side.
    pub fn cut_capacity(&self, side: &[bool]) -> f64 {
        let mut c = 0.0;
        for (u, arcs) in self.arcs.iter().enumerate() {
            if side[u] {
                c += arcs.iter().filter(|a| !side[a.to]).map(|a| a.cap).sum::<f64>();
            }
        }
        c
    }

    /// Checks capacity bounds, skew symmetry, conservation at inner nodes and
    /// that the flow value matches the capacity of the residual min cut.
    pub fn audit(&self, s: usize, t: usize, value: f64) -> Result<()> {
        let scale = 1.0 + value.abs();
        let tol = 1e-9 * scale * (self.len() as f64).max(1.0);
        for (u, arcs) in self.arcs.iter().enumerate() {
            let mut net = 0.0;
            for a in arcs {
                if a.flow > a.cap + tol {
                    return Err(Error::Invariant(format!("arc {u}->{} exceeds its capacity", a.to)));
                }
                let back = &self.arcs[a.to][a.rev];
                if (a.flow + back.flow).abs() > tol {
                    return Err(Error::Invariant(format!("arc {u}->{} is not skew symmetric", a.to)));
                }
                net += a.flow;
            }
            if u != s && u != t && net.abs() > tol {
                return Err(Error::Invariant(format!("flow not conserved at node {u}")));
            }
        }
        let cut = self.cut_capacity(&self.source_side(s));
        if (cut - value).abs() > tol {
            return Err(Error::Invariant(format!("max-flow {value} differs from min-cut {cut}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn classic_network() {
        // CLRS-style example with max flow 23
        let mut g = FlowNetwork::new(6);
        for (u, v, c) in [
            (0, 1, 16.0),
            (0, 2, 13.0),
            (2, 1, 4.0),
            (1, 3, 12.0),
            (3, 2, 9.0),
            (2, 4, 14.0),
            (4, 3, 7.0),
            (3, 5, 20.0),
            (4, 5, 4.0),
        ] {
            g.add_edge(u, v, c, 0.0);
        }
        let f = g.max_flow(0, 5);
        assert_eq!(f, 23.0);
        g.audit(0, 5, f).unwrap();
        let side = g.source_side(0);
        assert!(side[0] && !side[5]);
    }

    #[test]
    fn disconnected_sink() {
        let mut g = FlowNetwork::new(3);
        g.add_edge(0, 1, 5.0, 0.0);
        assert_eq!(g.max_flow(0, 2), 0.0);
        g.audit(0, 2, 0.0).unwrap();
    }

    proptest! {
        #[test]
        fn flow_equals_min_cut_by_enumeration(caps in proptest::collection::vec(0.0f64..5.0, 30)) {
            let n = 6;
            let mut g = FlowNetwork::new(n);
            let mut k = 0;
            let mut list = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if k + 1 < caps.len() {
                        g.add_edge(u, v, caps[k], caps[k + 1]);
                        list.push((u, v, caps[k]));
                        list.push((v, u, caps[k + 1]));
                        k += 2;
                    }
                }
            }
            let f = g.max_flow(0, n - 1);
            g.audit(0, n - 1, f).unwrap();
            let mut best = f64::INFINITY;
            for mask in 0..(1u32 << (n - 2)) {
                let side = |x: usize| x == 0 || (x != n - 1 && mask >> (x - 1) & 1 == 1);
                let c: f64 = list.iter().filter(|(u, v, _)| side(*u) && !side(*v)).map(|e| e.2).sum();
                best = best.min(c);
            }
            prop_assert!((best - f).abs() < 1e-9);
        }
    }
}
