//! Discrete-event network: overlay topology, latency histogram, link delays
//! and flooding.

mod histogram;
mod queue;
mod topology;

pub use histogram::{LatencyHistogram, LatencySampler};
pub use queue::EventQueue;
pub use topology::{generate_topology, Link, Topology};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("histogram has no buckets")]
    EmptyHistogram,
    #[error("invalid histogram bucket: {0}")]
    InvalidBucket(String),
    #[error("histogram masses sum to {0}, expected 1")]
    MassNotNormalized(f64),
    #[error("malformed histogram line {line}: `{content}`")]
    HistogramLine { line: usize, content: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("need more than {min_degree} nodes, got {n}")]
    TooFewNodes { n: usize, min_degree: usize },
    #[error("link latency must be positive, got {0}")]
    NonPositiveLatency(f64),
    #[error("bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),
    #[error("invalid edge {0}-{1}")]
    InvalidEdge(usize, usize),
    #[error("no connected topology after {0} attempts")]
    Disconnected(u32),
}

/// How concurrent transfers on one link interact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Queueing {
    /// Every transfer sees the full link bandwidth.
    #[default]
    Parallel,
    /// Transfers on a directed link are serialized in send order.
    Serialized,
}

impl std::str::FromStr for Queueing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "parallel" | "none" => Ok(Queueing::Parallel),
            "serialized" => Ok(Queueing::Serialized),
            other => Err(format!("unknown queueing mode `{other}`")),
        }
    }
}

impl std::fmt::Display for Queueing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Queueing::Parallel => "parallel",
            Queueing::Serialized => "serialized",
        })
    }
}

/// Topology plus the per-transfer delay model.
#[derive(Debug, Clone)]
pub struct Network {
    topology: Topology,
    verify_sec_per_byte: f64,
    processing_sec: f64,
    queueing: Queueing,
    /// Per directed link (same layout as the adjacency lists): time the
    /// link becomes free in serialized mode.
    busy_until: Vec<Vec<f64>>,
}

impl Network {
    pub fn new(topology: Topology, verify_sec_per_byte: f64, queueing: Queueing) -> Self {
        let busy_until = (0..topology.len())
            .map(|u| vec![0.0; topology.degree(u)])
            .collect();
        Network {
            topology,
            verify_sec_per_byte,
            processing_sec: 0.0,
            queueing,
            busy_until,
        }
    }

    /// Adds a fixed, size-independent delay to every transfer: block
    /// handling at the receiver before it relays or mines on the block.
    pub fn with_processing_delay(mut self, seconds: f64) -> Self {
        self.processing_sec = seconds;
        self
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn serialization_delay(&self, size_bytes: u64) -> f64 {
        8.0 * size_bytes as f64 / self.topology.bandwidth_bps()
    }

    /// Latency plus serialization plus receiver-side verification and
    /// processing.
    pub fn transfer_delay(&self, size_bytes: u64, link: &Link) -> f64 {
        link.latency
            + self.serialization_delay(size_bytes)
            + self.verify_sec_per_byte * size_bytes as f64
            + self.processing_sec
    }

    /// Sends `size_bytes` from `from` to every neighbor accepted by `filter`,
    /// returning `(neighbor, arrival time)` in neighbor order.
    pub fn send_to<F: FnMut(usize) -> bool>(
        &mut self,
        from: usize,
        size_bytes: u64,
        now: f64,
        mut filter: F,
    ) -> Vec<(usize, f64)> {
        let ser = self.serialization_delay(size_bytes);
        let mut out = Vec::new();
        for (i, link) in self.topology.neighbors(from).iter().enumerate() {
            if !filter(link.peer) {
                continue;
            }
            let delay = self.transfer_delay(size_bytes, link);
            let arrival = match self.queueing {
                Queueing::Parallel => now + delay,
                Queueing::Serialized => {
                    let start = now.max(self.busy_until[from][i]);
                    self.busy_until[from][i] = start + ser;
                    start + delay
                }
            };
            out.push((link.peer, arrival));
        }
        out
    }

    /// Floods one message of `size_bytes` from `origin` with relay on first
    /// receipt to every neighbor but the sender. Returns each node's first
    /// arrival time (`None` if unreachable) and the number of deliveries.
    pub fn flood(
        &mut self,
        origin: usize,
        size_bytes: u64,
        start: f64,
    ) -> (Vec<Option<f64>>, usize) {
        let n = self.topology.len();
        let mut first = vec![None; n];
        let mut queue = EventQueue::new();
        first[origin] = Some(start);
        for (to, t) in self.send_to(origin, size_bytes, start, |_| true) {
            queue.push(t, (origin, to));
        }
        let mut deliveries = 0;
        while let Some((t, (from, to))) = queue.pop() {
            deliveries += 1;
            if first[to].is_some() {
                continue;
            }
            first[to] = Some(t);
            for (next, at) in self.send_to(to, size_bytes, t, |p| p != from) {
                queue.push(at, (to, next));
            }
        }
        (first, deliveries)
    }
}
