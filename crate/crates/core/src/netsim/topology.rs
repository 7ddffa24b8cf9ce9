use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LatencyHistogram, NetError};

/// One direction of a symmetric overlay edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub peer: usize,
    pub latency: f64,
}

/// Undirected overlay network with per-edge latency and a uniform per-link
/// bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    adjacency: Vec<Vec<Link>>,
    bandwidth_bps: f64,
}

impl Topology {
    /// Builds a topology from explicit undirected edges `(a, b, latency)`.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize, f64)],
        bandwidth_bps: f64,
    ) -> Result<Self, NetError> {
        if !(bandwidth_bps > 0.0) {
            return Err(NetError::InvalidBandwidth(bandwidth_bps));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b, lat) in edges {
            if a >= n || b >= n || a == b {
                return Err(NetError::InvalidEdge(a, b));
            }
            if !(lat > 0.0 && lat.is_finite()) {
                return Err(NetError::NonPositiveLatency(lat));
            }
            if adjacency[a].iter().any(|l: &Link| l.peer == b) {
                return Err(NetError::InvalidEdge(a, b));
            }
            adjacency[a].push(Link {
                peer: b,
                latency: lat,
            });
            adjacency[b].push(Link {
                peer: a,
                latency: lat,
            });
        }
        for links in &mut adjacency {
            links.sort_by_key(|l| l.peer);
        }
        Ok(Topology {
            adjacency,
            bandwidth_bps,
        })
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn bandwidth_bps(&self) -> f64 {
        self.bandwidth_bps
    }

    /// Neighbors of `node` in ascending order.
    pub fn neighbors(&self, node: usize) -> &[Link] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn min_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub fn latency(&self, a: usize, b: usize) -> Option<f64> {
        self.adjacency
            .get(a)?
            .iter()
            .find(|l| l.peer == b)
            .map(|l| l.latency)
    }

    /// Undirected edges with `a < b`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(a, links)| {
            links
                .iter()
                .filter(move |l| l.peer > a)
                .map(move |l| (a, l.peer, l.latency))
        })
    }

    pub fn is_connected(&self) -> bool {
        if self.adjacency.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for l in &self.adjacency[u] {
                if !seen[l.peer] {
                    seen[l.peer] = true;
                    count += 1;
                    queue.push_back(l.peer);
                }
            }
        }
        count == self.len()
    }

    /// Plain-text dump: a header line then one `a b latency` line per edge.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# nodes {} bandwidth_bps {} edges {}",
            self.len(),
            self.bandwidth_bps,
            self.edges().count()
        );
        for (a, b, lat) in self.edges() {
            let _ = writeln!(s, "{a} {b} {lat}");
        }
        s
    }
}

const MAX_ATTEMPTS: u32 = 64;

/// Random overlay: every node keeps connecting to uniformly chosen peers
/// until it has `min_degree` neighbors; edge latencies are drawn i.i.d. from
/// `histogram`. Disconnected draws are discarded and retried.
pub fn generate_topology(
    n: usize,
    min_degree: usize,
    histogram: &LatencyHistogram,
    bandwidth_bps: f64,
    seed: u64,
) -> Result<Topology, NetError> {
    if n <= min_degree {
        return Err(NetError::TooFewNodes { n, min_degree });
    }
    if histogram.min_latency_with_mass() <= 0.0 {
        return Err(NetError::NonPositiveLatency(
            histogram.min_latency_with_mass(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = histogram.sampler();
    for _ in 0..MAX_ATTEMPTS {
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for u in 0..n {
            while adj[u].len() < min_degree {
                let v = rng.random_range(0..n);
                if v != u && !adj[u].contains(&v) {
                    adj[u].insert(v);
                    adj[v].insert(u);
                }
            }
        }
        let mut edges = Vec::new();
        for (a, peers) in adj.iter().enumerate() {
            for &b in peers.range(a + 1..) {
                edges.push((a, b, sampler.sample(&mut rng)));
            }
        }
        let topo = Topology::from_edges(n, &edges, bandwidth_bps)?;
        if topo.is_connected() {
            return Ok(topo);
        }
    }
    Err(NetError::Disconnected(MAX_ATTEMPTS))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_nodes_degree_five_is_complete() {
        let h = LatencyHistogram::default_synthetic();
        let t = generate_topology(6, 5, &h, 1e5, 1).unwrap();
        assert_eq!(t.edges().count(), 15);
        for u in 0..6 {
            assert_eq!(t.degree(u), 5);
        }
    }

    #[test]
    fn same_seed_same_graph() {
        let h = LatencyHistogram::default_synthetic();
        let a = generate_topology(100, 5, &h, 1e5, 42).unwrap();
        let b = generate_topology(100, 5, &h, 1e5, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_topology(100, 5, &h, 1e5, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn too_few_nodes() {
        let h = LatencyHistogram::default_synthetic();
        assert!(matches!(
            generate_topology(5, 5, &h, 1e5, 0).unwrap_err(),
            NetError::TooFewNodes { .. }
        ));
    }

    #[test]
    fn zero_latency_histogram_rejected() {
        let h = LatencyHistogram::constant(0.0);
        assert!(matches!(
            generate_topology(10, 3, &h, 1e5, 0).unwrap_err(),
            NetError::NonPositiveLatency(_)
        ));
    }

    #[test]
    fn edge_validation() {
        assert!(Topology::from_edges(3, &[(0, 0, 0.1)], 1e5).is_err());
        assert!(Topology::from_edges(3, &[(0, 1, 0.1), (1, 0, 0.1)], 1e5).is_err());
        assert!(Topology::from_edges(3, &[(0, 1, 0.0)], 1e5).is_err());
        let t = Topology::from_edges(3, &[(0, 1, 0.1)], 1e5).unwrap();
        assert!(!t.is_connected());
        assert_eq!(t.latency(1, 0), Some(0.1));
    }
}
