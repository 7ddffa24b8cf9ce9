//! Brute-force reference implementations of every metric, written straight
//! from the definitions with no shared code beyond the log types.

use std::collections::BTreeMap;

use ngsim::chain::{BlockId, BlockKind, MinerId, Protocol};
use ngsim::eventlog::{Action, EventLog};

#[derive(Debug, Clone)]
pub struct OBlock {
    pub parent: BlockId,
    pub kind: BlockKind,
    pub miner: MinerId,
    pub created: f64,
    pub txs: u64,
}

pub struct Oracle<'a> {
    pub log: &'a EventLog,
    pub blocks: BTreeMap<BlockId, OBlock>,
    pub n: usize,
}

impl<'a> Oracle<'a> {
    pub fn new(log: &'a EventLog) -> Self {
        let genesis_kind = match log.meta.protocol {
            Protocol::Bitcoin => BlockKind::BitcoinBlock,
            Protocol::Ng => BlockKind::KeyBlock,
        };
        let mut blocks = BTreeMap::new();
        blocks.insert(
            BlockId::GENESIS,
            OBlock {
                parent: BlockId::GENESIS,
                kind: genesis_kind,
                miner: MinerId::NONE,
                created: 0.0,
                txs: 0,
            },
        );
        for r in &log.records {
            if r.action == Action::Generate && !blocks.contains_key(&r.block) {
                blocks.insert(
                    r.block,
                    OBlock {
                        parent: r.parent,
                        kind: r.kind,
                        miner: r.miner,
                        created: r.time,
                        txs: r.txs,
                    },
                );
            }
        }
        Oracle {
            log,
            blocks,
            n: log.meta.nodes as usize,
        }
    }

    /// Genesis-first path to `b`.
    pub fn path(&self, b: BlockId) -> Vec<BlockId> {
        let mut out = vec![b];
        let mut cur = b;
        while cur != BlockId::GENESIS {
            cur = self.blocks[&cur].parent;
            out.push(cur);
        }
        out.reverse();
        out
    }

    pub fn is_descendant(&self, x: BlockId, ancestor: BlockId) -> bool {
        self.path(x).contains(&ancestor)
    }

    pub fn weight(&self, b: BlockId) -> usize {
        self.path(b)
            .iter()
            .skip(1)
            .filter(|id| self.blocks[id].kind.is_proof_of_work())
            .count()
    }

    fn is_pow(&self, b: BlockId) -> bool {
        b != BlockId::GENESIS && self.blocks[&b].kind.is_proof_of_work()
    }

    /// Every node's tip after replaying all records with time <= `t`.
    pub fn tips_at(&self, t: f64) -> Vec<BlockId> {
        let mut tips = vec![BlockId::GENESIS; self.n];
        for r in self.log.records.iter().filter(|r| r.time <= t) {
            let node = r.node as usize;
            match r.action {
                Action::Generate | Action::Receive if r.parent == tips[node] => {
                    tips[node] = r.block
                }
                Action::Switch => tips[node] = r.block,
                _ => {}
            }
        }
        tips
    }

    pub fn end_time(&self) -> f64 {
        self.log.records.last().map_or(0.0, |r| r.time)
    }

    /// Head of the final main chain: most common final tip; ties go to the
    /// earliest created block, then the lowest id.
    pub fn main_head(&self) -> BlockId {
        let tips = self.tips_at(f64::INFINITY);
        let mut best: Option<(usize, BlockId)> = None;
        for &t in &tips {
            let count = tips.iter().filter(|&&x| x == t).count();
            let better = match best {
                None => true,
                Some((c, b)) => {
                    count > c
                        || (count == c
                            && (self.blocks[&t].created < self.blocks[&b].created
                                || (self.blocks[&t].created == self.blocks[&b].created && t < b)))
                }
            };
            if better {
                best = Some((count, t));
            }
        }
        best.map_or(BlockId::GENESIS, |(_, b)| b)
    }

    pub fn main_chain(&self) -> Vec<BlockId> {
        self.path(self.main_head())
    }

    /// Smallest Δ such that some subset of at least `k` nodes holds the same
    /// chain prefix of blocks created strictly before `t - Δ`. Candidate
    /// cutoffs are `t` and every block creation time; every subset of nodes
    /// is enumerated.
    pub fn point_delay(&self, t: f64, epsilon: f64) -> f64 {
        let k = ((epsilon * self.n as f64) - 1e-9).ceil().max(1.0) as usize;
        let paths: Vec<Vec<BlockId>> = self.tips_at(t).iter().map(|&b| self.path(b)).collect();
        let mut cutoffs: Vec<f64> = self
            .blocks
            .values()
            .map(|b| b.created)
            .filter(|&c| c <= t)
            .collect();
        cutoffs.push(t);
        cutoffs.sort_by(|a, b| b.total_cmp(a));
        cutoffs.dedup();
        for c in cutoffs {
            let prefixes: Vec<Vec<BlockId>> = paths
                .iter()
                .map(|p| {
                    p.iter()
                        .copied()
                        .filter(|id| self.blocks[id].created < c)
                        .collect()
                })
                .collect();
            for mask in 0u32..(1 << self.n) {
                if (mask.count_ones() as usize) < k {
                    continue;
                }
                let members: Vec<usize> = (0..self.n).filter(|i| mask & (1 << i) != 0).collect();
                if members.iter().all(|&i| prefixes[i] == prefixes[members[0]]) {
                    return t - c;
                }
            }
        }
        t
    }

    pub fn sample_times(&self, from: f64) -> Vec<f64> {
        let end = self.end_time();
        let mut ts: Vec<f64> = self
            .log
            .records
            .iter()
            .map(|r| r.time)
            .filter(|&t| t >= from)
            .collect();
        let mut g = 0.0f64;
        while g <= end {
            if g >= from {
                ts.push(g);
            }
            g += 1.0;
        }
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }

    pub fn consensus_delay(&self, epsilon: f64, delta: f64, from: f64) -> Option<f64> {
        let samples: Vec<f64> = self
            .sample_times(from)
            .into_iter()
            .map(|t| self.point_delay(t, epsilon))
            .collect();
        percentile(&samples, delta)
    }

    pub fn pow_blocks_since(&self, from: f64) -> (usize, usize) {
        let main = self.main_chain();
        let all: Vec<BlockId> = self
            .blocks
            .keys()
            .copied()
            .filter(|&b| self.is_pow(b) && self.blocks[&b].created >= from)
            .collect();
        let on_main = all.iter().filter(|b| main.contains(b)).count();
        (on_main, all.len())
    }

    pub fn mpu(&self, from: f64) -> Option<f64> {
        let (m, a) = self.pow_blocks_since(from);
        (a > 0).then(|| m as f64 / a as f64)
    }

    pub fn fairness(&self, from: f64) -> Option<f64> {
        let powers = &self.log.meta.powers;
        let total: f64 = powers.iter().sum();
        let mut largest = 0;
        for (i, &p) in powers.iter().enumerate() {
            if p > powers[largest] {
                largest = i;
            }
        }
        let share = powers[largest] / total;
        let main: Vec<BlockId> = self
            .main_chain()
            .into_iter()
            .filter(|&b| self.is_pow(b) && self.blocks[&b].created >= from)
            .collect();
        if main.is_empty() {
            return None;
        }
        let others = main
            .iter()
            .filter(|b| self.blocks[b].miner.index() != largest)
            .count();
        Some((others as f64 / main.len() as f64) / (1.0 - share))
    }

    /// First Generate or Receive time of `b` at `node`.
    pub fn first_seen(&self, node: usize, b: BlockId) -> Option<f64> {
        self.log
            .records
            .iter()
            .find(|r| {
                r.node as usize == node
                    && r.block == b
                    && matches!(r.action, Action::Generate | Action::Receive)
            })
            .map(|r| r.time)
    }

    pub fn prune_samples(&self, from: f64) -> Vec<f64> {
        let main = self.main_chain();
        // Root of a pruned branch: an off-main block whose parent is main.
        let roots: Vec<BlockId> = self
            .blocks
            .iter()
            .filter(|(id, b)| !main.contains(id) && main.contains(&b.parent))
            .map(|(id, _)| *id)
            .collect();
        let mut out = Vec::new();
        for node in 0..self.n {
            for &root in &roots {
                let branch: Vec<BlockId> = self
                    .blocks
                    .keys()
                    .copied()
                    .filter(|&b| self.is_descendant(b, root))
                    .collect();
                let seen: Vec<(BlockId, f64)> = branch
                    .iter()
                    .filter_map(|&b| self.first_seen(node, b).map(|t| (b, t)))
                    .collect();
                if seen.is_empty() {
                    continue;
                }
                let t_first = seen.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
                let w = seen.iter().map(|s| self.weight(s.0)).max().unwrap();
                let t_main = main
                    .iter()
                    .filter(|&&m| self.weight(m) > w)
                    .filter_map(|&m| self.first_seen(node, m))
                    .fold(f64::INFINITY, f64::min);
                if t_first >= from && t_main.is_finite() && t_main - t_first >= 0.0 {
                    out.push(t_main - t_first);
                }
            }
        }
        out
    }

    pub fn win_samples(&self, from: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for &b in self.main_chain().iter().skip(1) {
            let bb = &self.blocks[&b];
            if bb.created < from {
                continue;
            }
            let mut latest = 0.0f64;
            for (&x, xb) in &self.blocks {
                if xb.miner != bb.miner && !self.is_descendant(x, b) {
                    latest = latest.max(xb.created - bb.created);
                }
            }
            out.push(latest);
        }
        out
    }

    pub fn throughput(&self, from: f64) -> Option<f64> {
        let last = self
            .log
            .records
            .iter()
            .filter(|r| r.action == Action::Generate)
            .map(|r| r.time)
            .fold(0.0, f64::max);
        if last - from <= 0.0 {
            return None;
        }
        let txs: u64 = self
            .main_chain()
            .iter()
            .filter(|b| self.blocks[b].created >= from)
            .map(|b| self.blocks[b].txs)
            .sum();
        Some(txs as f64 / (last - from))
    }

    pub fn propagation(&self, p: f64, from: f64) -> Option<f64> {
        let mut per_block = Vec::new();
        for (&b, bb) in &self.blocks {
            if b == BlockId::GENESIS || bb.created < from {
                continue;
            }
            let delays: Vec<f64> = (0..self.n)
                .filter_map(|node| self.first_seen(node, b))
                .map(|t| t - bb.created)
                .collect();
            if let Some(v) = percentile(&delays, p) {
                per_block.push(v);
            }
        }
        (!per_block.is_empty()).then(|| per_block.iter().sum::<f64>() / per_block.len() as f64)
    }
}

/// Nearest rank: smallest sample such that at least a `p` fraction of the
/// samples is at or below it.
pub fn percentile(samples: &[f64], p: f64) -> Option<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .copied()
        .find(|&x| v.iter().filter(|&&y| y <= x).count() as f64 >= p * n - 1e-9)
}
