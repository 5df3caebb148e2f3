//! Per-slot ring topology: shortest paths, hop counts and edge usage.

use serde::{Deserialize, Serialize};

use crate::linkbudget::{select_rate, LinkConfig, RateTable};
use crate::orbital::Constellation;

/// Directed inter-satellite link `(from, to)`.
pub type Edge = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Towards increasing satellite index.
    Increasing,
    Decreasing,
    /// Source and destination coincide.
    Stay,
}

/// Hop-count shortest path on a ring of `n` satellites. A tie at distance
/// `n/2` goes towards increasing index.
pub fn ring_shortest_path(u: usize, v: usize, n: usize) -> (Direction, usize) {
    if u == v {
        return (Direction::Stay, 0);
    }
    let fwd = (v + n - u) % n;
    let back = n - fwd;
    if fwd <= back {
        (Direction::Increasing, fwd)
    } else {
        (Direction::Decreasing, back)
    }
}

/// Directed edges along the shortest ring path from `u` to `v`.
pub fn ring_path(u: usize, v: usize, n: usize) -> Vec<Edge> {
    let (dir, hops) = ring_shortest_path(u, v, n);
    let mut edges = Vec::with_capacity(hops);
    let mut at = u;
    for _ in 0..hops {
        let next = match dir {
            Direction::Increasing => (at + 1) % n,
            Direction::Decreasing => (at + n - 1) % n,
            Direction::Stay => at,
        };
        edges.push((at, next));
        at = next;
    }
    edges
}

/// Directed edges leaving `v0`. Empty for a single satellite; a two-satellite
/// ring has a single neighbour and hence one edge.
pub fn source_edges(v0: usize, n: usize) -> Vec<Edge> {
    let mut out = Vec::new();
    if n < 2 {
        return out;
    }
    for e in [(v0, (v0 + 1) % n), (v0, (v0 + n - 1) % n)] {
        if !out.contains(&e) {
            out.push(e);
        }
    }
    out
}

/// Every directed edge of the ring.
pub fn all_edges(n: usize) -> Vec<Edge> {
    let mut out = Vec::new();
    for u in 0..n {
        for e in source_edges(u, n) {
            if !out.contains(&e) {
                out.push(e);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IslEnforcement {
    SourceEdges,
    AllEdges,
}

/// Which traffic of one slot crosses a given edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeUsage {
    pub edge: Edge,
    /// Edge on the path `v0 -> n`.
    pub scatter: Vec<bool>,
    /// Edge on the path `v0 -> g`.
    pub direct: bool,
    /// Edge on the path `n -> g`.
    pub gather: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologySnapshot {
    pub slot: usize,
    pub time_s: f64,
    pub n_sats: usize,
    pub source: usize,
    pub dest: usize,
    pub rate_bps: f64,
    hops_src: Vec<usize>,
    hops_gs: Vec<usize>,
}

impl TopologySnapshot {
    /// Snapshot with an explicitly chosen destination and rate.
    pub fn new(slot: usize, time_s: f64, n_sats: usize, source: usize, dest: usize, rate_bps: f64) -> Self {
        assert!(n_sats >= 1 && source < n_sats && dest < n_sats);
        let hops_src = (0..n_sats).map(|n| ring_shortest_path(source, n, n_sats).1).collect();
        let hops_gs = (0..n_sats).map(|n| ring_shortest_path(n, dest, n_sats).1 + 1).collect();
        Self {
            slot,
            time_s,
            n_sats,
            source,
            dest,
            rate_bps,
            hops_src,
            hops_gs,
        }
    }

    /// ℓ(P(v0, n)).
    pub fn hops_src_to(&self, n: usize) -> usize {
        self.hops_src[n]
    }

    /// ℓ(P(n, g)), including the downlink hop.
    pub fn hops_to_gs(&self, n: usize) -> usize {
        self.hops_gs[n]
    }

    /// ℓ(P(v0, g)).
    pub fn hops_src_to_gs(&self) -> usize {
        self.hops_gs[self.source]
    }

    pub fn scatter_path(&self, n: usize) -> Vec<Edge> {
        ring_path(self.source, n, self.n_sats)
    }

    /// Ring part of the path from `n` to the ground station.
    pub fn gather_path(&self, n: usize) -> Vec<Edge> {
        ring_path(n, self.dest, self.n_sats)
    }

    pub fn edge_usage(&self, edge: Edge) -> EdgeUsage {
        let n = self.n_sats;
        EdgeUsage {
            edge,
            scatter: (0..n).map(|v| self.scatter_path(v).contains(&edge)).collect(),
            direct: self.gather_path(self.source).contains(&edge),
            gather: (0..n).map(|v| self.gather_path(v).contains(&edge)).collect(),
        }
    }

    pub fn enforced_edges(&self, mode: IslEnforcement) -> Vec<Edge> {
        match mode {
            IslEnforcement::SourceEdges => source_edges(self.source, self.n_sats),
            IslEnforcement::AllEdges => all_edges(self.n_sats),
        }
    }
}

/// How the destination satellite of each slot is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DestinationRule {
    /// Geometric argmin of the slant range.
    Geometric,
    /// Always this satellite.
    Fixed(usize),
}

/// Snapshots for `k` consecutive slots starting at `start_s`.
#[allow(clippy::too_many_arguments)]
pub fn build_snapshots(
    constellation: &Constellation,
    link: &LinkConfig,
    table: &RateTable,
    source: usize,
    start_s: f64,
    slot_len: f64,
    k: usize,
    rule: DestinationRule,
) -> Vec<TopologySnapshot> {
    let n = constellation.n_sats();
    (0..k)
        .map(|slot| {
            let t = start_s + slot as f64 * slot_len;
            let dest = match rule {
                DestinationRule::Fixed(d) => Some(d),
                DestinationRule::Geometric => constellation.destination_satellite(t).ok(),
            };
            match dest {
                Some(d) => {
                    let rate = select_rate(constellation, d, t, slot_len, link, table);
                    TopologySnapshot::new(slot, t, n, source, d, rate)
                }
                None => TopologySnapshot::new(slot, t, n, source, source, 0.0),
            }
        })
        .collect()
}
