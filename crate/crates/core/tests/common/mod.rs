#![allow(dead_code)]

pub mod ng;
pub mod oracle;

use ngsim::chain::{BlockId, BlockKind, MinerId, Protocol, TieBreak};
use ngsim::eventlog::{Action, EventLog, LogMeta, LogRecord};
use ngsim::harness::SimConfig;
use ngsim::metrics::{MetricsParams, MetricsReport};

use oracle::{percentile, Oracle};

/// Hand-written event logs for fixtures.
pub struct LogBuilder {
    log: EventLog,
    kind: BlockKind,
}

impl LogBuilder {
    pub fn new(protocol: Protocol, powers: Vec<f64>) -> Self {
        let kind = match protocol {
            Protocol::Bitcoin => BlockKind::BitcoinBlock,
            Protocol::Ng => BlockKind::KeyBlock,
        };
        LogBuilder {
            log: EventLog::new(LogMeta {
                protocol,
                nodes: powers.len() as u32,
                powers,
            }),
            kind,
        }
    }

    fn push(
        &mut self,
        time: f64,
        node: u32,
        action: Action,
        block: u64,
        parent: u64,
        kind: BlockKind,
        miner: u32,
    ) {
        self.log.push(LogRecord {
            time,
            node,
            action,
            block: BlockId(block),
            parent: BlockId(parent),
            kind,
            miner: MinerId(miner),
            size: 0,
            txs: 0,
            fork: None,
        });
    }

    /// `node` mines `block` on `parent`.
    pub fn generate(mut self, time: f64, node: u32, block: u64, parent: u64) -> Self {
        let kind = self.kind;
        self.push(time, node, Action::Generate, block, parent, kind, node);
        self
    }

    pub fn generate_kind(
        mut self,
        time: f64,
        node: u32,
        block: u64,
        parent: u64,
        kind: BlockKind,
    ) -> Self {
        self.push(time, node, Action::Generate, block, parent, kind, node);
        self
    }

    /// `node` receives `block` (mined by `miner` on `parent`).
    pub fn receive(mut self, time: f64, node: u32, block: u64, parent: u64, miner: u32) -> Self {
        let kind = self.kind;
        self.push(time, node, Action::Receive, block, parent, kind, miner);
        self
    }

    /// `node` moves its tip from `old` to `new`.
    pub fn switch(mut self, time: f64, node: u32, new: u64, old: u64, miner: u32) -> Self {
        let kind = self.kind;
        self.push(time, node, Action::Switch, new, old, kind, miner);
        self
    }

    pub fn build(self) -> EventLog {
        self.log
    }
}

/// Small, fork-prone configuration: short intervals and slow links.
#[allow(clippy::too_many_arguments)]
pub fn small_config(
    ng: bool,
    n: usize,
    seed: u64,
    run_length: u64,
    interval: f64,
    size: u64,
    tie_first_seen: bool,
    skew: bool,
) -> SimConfig {
    let mut cfg = SimConfig::for_protocol(if ng { Protocol::Ng } else { Protocol::Bitcoin });
    cfg.n_nodes = n;
    cfg.min_degree = (n - 1).min(3);
    cfg.seed = seed;
    cfg.run_length_blocks = run_length;
    cfg.block_interval_sec = interval;
    cfg.key_interval_sec = interval;
    cfg.microblock_interval_sec = 1.0 + interval / 4.0;
    cfg.block_size_bytes = size;
    cfg.microblock_size_bytes = size;
    cfg.tie_break = if tie_first_seen {
        TieBreak::FirstSeen
    } else {
        TieBreak::Random
    };
    cfg.clock_skew_sec = if skew { 0.3 } else { 0.0 };
    cfg
}

/// Asserts every field of the fast report equals the brute-force value.
pub fn assert_matches_oracle(log: &EventLog, params: &MetricsParams) {
    let report = MetricsReport::compute(log, params).unwrap();
    let o = Oracle::new(log);
    let from = params.warmup_fraction * o.end_time();
    let prune = o.prune_samples(from);
    let (main, all) = o.pow_blocks_since(from);
    assert_eq!(
        report.consensus_delay,
        o.consensus_delay(params.epsilon, params.delta, from),
        "consensus delay"
    );
    assert_eq!(report.mining_power_utilization, o.mpu(from), "mpu");
    assert_eq!(report.fairness, o.fairness(from), "fairness");
    assert_eq!(
        report.time_to_prune,
        percentile(&prune, params.delta),
        "time to prune"
    );
    assert_eq!(report.prune_samples, prune.len(), "prune sample count");
    assert_eq!(
        report.time_to_win,
        percentile(&o.win_samples(from), params.delta),
        "time to win"
    );
    assert_eq!(report.throughput, o.throughput(from), "throughput");
    assert_eq!(
        report.propagation_time,
        o.propagation(params.delta, from),
        "propagation"
    );
    assert_eq!(
        (report.main_pow_blocks, report.pow_blocks),
        (main, all),
        "pow counts"
    );
}
