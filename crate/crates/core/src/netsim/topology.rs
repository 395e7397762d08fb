//! Physical links, shortest-latency routes and cluster assignment.

use std::collections::BTreeMap;

use rand::Rng;

use crate::ids::NodeId;
use crate::rng::stream;
use crate::time::SimDuration;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Link {
    pub latency: SimDuration,
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct Topology {
    n: usize,
    links: BTreeMap<(u32, u32), Link>,
    dist: Vec<Vec<Option<u64>>>,
    next: Vec<Vec<Option<u32>>>,
}

fn key(a: NodeId, b: NodeId) -> (u32, u32) {
    (a.0.min(b.0), a.0.max(b.0))
}

impl Topology {
    /// `n` nodes and no links; add links, then call `compute_routes`.
    pub fn new(n: usize) -> Self {
        Topology { n, links: BTreeMap::new(), dist: Vec::new(), next: Vec::new() }
    }

    /// Every pair linked with a latency drawn once from U(min_ms, max_ms).
    pub fn full_mesh(n: usize, seed: u64, min_ms: f64, max_ms: f64, loss: f64) -> Self {
        let mut t = Topology::new(n);
        for a in 0..n as u32 {
            for b in a + 1..n as u32 {
                let mut r = stream(seed, "link", (a as u64) << 32 | b as u64);
                let ms = if max_ms > min_ms { r.gen_range(min_ms..max_ms) } else { min_ms };
                t.add_link(NodeId(a), NodeId(b), SimDuration::from_secs_f64(ms / 1000.0), loss);
            }
        }
        t.compute_routes();
        t
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn add_link(&mut self, a: NodeId, b: NodeId, latency: SimDuration, loss: f64) {
        assert!(a != b && (a.0 as usize) < self.n && (b.0 as usize) < self.n, "link endpoints must be distinct nodes");
        self.links.insert(key(a, b), Link { latency, loss });
    }

    pub fn link(&self, a: NodeId, b: NodeId) -> Option<&Link> {
        self.links.get(&key(a, b))
    }

    /// All-pairs shortest latency paths. Ties keep the route found first,
    /// which favours lower intermediate ids.
    pub fn compute_routes(&mut self) {
        let n = self.n;
        let mut dist = vec![vec![None; n]; n];
        let mut next = vec![vec![None; n]; n];
        for i in 0..n {
            dist[i][i] = Some(0);
            next[i][i] = Some(i as u32);
        }
        for (&(a, b), l) in &self.links {
            let (a, b) = (a as usize, b as usize);
            dist[a][b] = Some(l.latency.0);
            dist[b][a] = Some(l.latency.0);
            next[a][b] = Some(b as u32);
            next[b][a] = Some(a as u32);
        }
        for k in 0..n {
            for i in 0..n {
                let Some(ik) = dist[i][k] else { continue };
                for j in 0..n {
                    let Some(kj) = dist[k][j] else { continue };
                    if dist[i][j].map(|d| ik + kj < d).unwrap_or(true) {
                        dist[i][j] = Some(ik + kj);
                        next[i][j] = next[i][k];
                    }
                }
            }
        }
        self.dist = dist;
        self.next = next;
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> Option<SimDuration> {
        self.dist.get(a.0 as usize)?.get(b.0 as usize)?.map(SimDuration)
    }

    pub fn next_hop(&self, from: NodeId, to: NodeId) -> Option<NodeId> {
        self.next.get(from.0 as usize)?.get(to.0 as usize)?.map(NodeId)
    }

    /// Node sequence from `a` to `b`, both included.
    pub fn path(&self, a: NodeId, b: NodeId) -> Option<Vec<NodeId>> {
        let mut p = vec![a];
        let mut cur = a;
        while cur != b {
            cur = self.next_hop(cur, b)?;
            p.push(cur);
        }
        Some(p)
    }

    pub fn is_connected(&self, nodes: &[NodeId]) -> bool {
        nodes.iter().all(|a| nodes.iter().all(|b| self.distance(*a, *b).is_some()))
    }

    /// Largest shortest-path latency between any two of `nodes`.
    pub fn diameter(&self, nodes: &[NodeId]) -> SimDuration {
        let mut d = 0;
        for a in nodes {
            for b in nodes {
                d = d.max(self.distance(*a, *b).map(|x| x.0).unwrap_or(0));
            }
        }
        SimDuration(d)
    }

    /// Closest of `among` by latency; ties go to the lower id.
    pub fn nearest(&self, from: NodeId, among: &[NodeId]) -> Option<NodeId> {
        among
            .iter()
            .filter_map(|o| self.distance(from, *o).map(|d| (d, *o)))
            .min()
            .map(|(_, o)| o)
    }
}
