//! Metrics computed from event logs: consensus delay, fairness, mining power
//! utilization, time to prune, time to win, throughput and propagation time.

mod index;

pub use index::{tip_after, BlockInfo, LogIndex};

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::eventlog::EventLog;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("largest miner holds all mining power; fairness is undefined")]
    DegeneratePower,
    #[error("no mining powers recorded")]
    NoPowers,
}

/// Nearest-rank percentile: the smallest sample with at least `p` of the
/// samples at or below it.
pub fn nearest_rank(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let rank = ((p * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    Some(v[rank - 1])
}

/// Number of nodes that must agree for an `epsilon` fraction of `n`.
pub fn required_agreeing(n: usize, epsilon: f64) -> usize {
    ((epsilon * n as f64) - 1e-9).ceil().max(1.0) as usize
}

/// Index of the largest miner (lowest index on ties) and its power share.
pub fn largest_share(powers: &[f64]) -> Result<(usize, f64), MetricError> {
    let total: f64 = powers.iter().sum();
    let (idx, max) = powers
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |best, (i, &p)| match best {
            Some((_, b)) if b >= p => best,
            _ => Some((i, p)),
        })
        .ok_or(MetricError::NoPowers)?;
    Ok((idx, max / total))
}

impl LogIndex<'_> {
    /// Sample instants at or after `from`: every record time plus a
    /// one-second grid, deduplicated and sorted.
    pub fn sample_times(&self, from: f64) -> Vec<f64> {
        let mut times: Vec<f64> = self
            .log
            .records
            .iter()
            .map(|r| r.time)
            .filter(|&t| t >= from)
            .collect();
        let mut g = from.ceil();
        while g <= self.end_time {
            times.push(g);
            g += 1.0;
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
    }

    fn lca(&self, mut a: usize, mut b: usize) -> usize {
        while self.blocks[a].height > self.blocks[b].height {
            a = self.blocks[a].parent;
        }
        while self.blocks[b].height > self.blocks[a].height {
            b = self.blocks[b].parent;
        }
        while a != b {
            a = self.blocks[a].parent;
            b = self.blocks[b].parent;
        }
        a
    }

    /// Point consensus delay at `t` given the number of nodes per tip.
    ///
    /// For a block X, node i agrees on the prefix ending at X for every
    /// cutoff up to `e_i(X)`, the creation time of the block following X on
    /// its chain (or `t` if its chain ends at X). The latest cutoff with `k`
    /// agreeing nodes is the k-th largest such `e_i`, maximized over X.
    fn point_delay(&self, t: f64, tips: &BTreeMap<usize, usize>, k: usize) -> f64 {
        let mut iter = tips.keys();
        let Some(&first) = iter.next() else { return t };
        let lca = iter.fold(first, |acc, &x| self.lca(acc, x));
        let mut support: HashMap<usize, Vec<(f64, usize)>> = HashMap::new();
        for (&tip, &count) in tips {
            support.entry(tip).or_default().push((t, count));
            let mut child = tip;
            while child != lca {
                let x = self.blocks[child].parent;
                support
                    .entry(x)
                    .or_default()
                    .push((self.blocks[child].created.min(t), count));
                child = x;
            }
        }
        let mut best: Option<f64> = None;
        for (x, mut es) in support {
            let created = self.blocks[x].created;
            es.retain(|&(e, _)| e > created);
            es.sort_by(|a, b| b.0.total_cmp(&a.0));
            let mut acc = 0;
            for (e, c) in es {
                acc += c;
                if acc >= k {
                    best = Some(best.map_or(e, |b: f64| b.max(e)));
                    break;
                }
            }
        }
        if best.is_none() {
            let total: usize = tips.values().sum();
            let mut child = lca;
            while child != 0 && total >= k {
                let x = self.blocks[child].parent;
                let e = self.blocks[child].created.min(t);
                if e > self.blocks[x].created {
                    best = Some(e);
                    break;
                }
                child = x;
            }
        }
        t - best.unwrap_or(0.0)
    }

    /// Point consensus delays at each instant of `times` (ascending).
    pub fn point_delays(&self, times: &[f64], epsilon: f64) -> Vec<f64> {
        let k = required_agreeing(self.n_nodes, epsilon);
        let mut tips = vec![crate::chain::BlockId::GENESIS; self.n_nodes];
        let mut counts: BTreeMap<usize, usize> = BTreeMap::from([(0, self.n_nodes)]);
        let records = &self.log.records;
        let mut cursor = 0;
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            while cursor < records.len() && records[cursor].time <= t {
                let r = &records[cursor];
                let node = r.node as usize;
                let new = tip_after(tips[node], r.action, r.block, r.parent);
                if new != tips[node] {
                    let old = self.index_of[&tips[node]];
                    let c = counts.get_mut(&old).expect("tracked tip");
                    *c -= 1;
                    if *c == 0 {
                        counts.remove(&old);
                    }
                    *counts.entry(self.index_of[&new]).or_default() += 1;
                    tips[node] = new;
                }
                cursor += 1;
            }
            out.push(self.point_delay(t, &counts, k));
        }
        out
    }

    pub fn point_consensus_delay(&self, t: f64, epsilon: f64) -> f64 {
        self.point_delays(&[t], epsilon)[0]
    }

    pub fn consensus_delay_samples(&self, epsilon: f64, from: f64) -> Vec<f64> {
        self.point_delays(&self.sample_times(from), epsilon)
    }

    /// Main-chain and total proof-of-work blocks created at or after `from`.
    pub fn pow_counts(&self, from: f64) -> (usize, usize) {
        let mut main = 0;
        let mut all = 0;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.is_pow() && b.created >= from {
                all += 1;
                if self.is_main(i) {
                    main += 1;
                }
            }
        }
        (main, all)
    }

    pub fn mining_power_utilization(&self, from: f64) -> Option<f64> {
        let (main, all) = self.pow_counts(from);
        (all > 0).then(|| main as f64 / all as f64)
    }

    pub fn fairness(&self, from: f64) -> Result<Option<f64>, MetricError> {
        let (largest, share) = largest_share(&self.log.meta.powers)?;
        if share >= 1.0 {
            return Err(MetricError::DegeneratePower);
        }
        let mut main = 0usize;
        let mut others = 0usize;
        for &i in &self.main_chain {
            let b = &self.blocks[i];
            if b.is_pow() && b.created >= from {
                main += 1;
                if b.miner.index() != largest {
                    others += 1;
                }
            }
        }
        Ok((main > 0).then(|| (others as f64 / main as f64) / (1.0 - share)))
    }

    /// Per (node, pruned branch): time from the first receipt of a branch
    /// block to the first receipt of a main-chain block heavier than every
    /// branch block that node received.
    pub fn time_to_prune_samples(&self, from: f64) -> Vec<f64> {
        let n = self.blocks.len();
        let mut root = vec![usize::MAX; n];
        for i in 1..n {
            if self.is_main(i) {
                continue;
            }
            let p = self.blocks[i].parent;
            root[i] = if self.is_main(p) { i } else { root[p] };
        }
        let max_w = self.blocks.iter().map(|b| b.weight).max().unwrap_or(0) as usize;
        let mut out = Vec::new();
        for seen in &self.first_seen {
            // Earliest receipt of a main block per weight, then suffix minima.
            let mut by_weight = vec![f64::INFINITY; max_w + 2];
            let mut branches: BTreeMap<usize, (f64, u64)> = BTreeMap::new();
            for (&i, &t) in seen {
                let b = &self.blocks[i];
                if self.is_main(i) {
                    let w = b.weight as usize;
                    by_weight[w] = by_weight[w].min(t);
                } else if root[i] != usize::MAX {
                    let e = branches.entry(root[i]).or_insert((t, b.weight));
                    e.0 = e.0.min(t);
                    e.1 = e.1.max(b.weight);
                }
            }
            for w in (0..=max_w).rev() {
                by_weight[w] = by_weight[w].min(by_weight[w + 1]);
            }
            for (t_first, w) in branches.into_values() {
                if t_first < from {
                    continue;
                }
                let heavier = by_weight[(w as usize + 1).min(max_w + 1)];
                if heavier.is_finite() && heavier - t_first >= 0.0 {
                    out.push(heavier - t_first);
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }

    /// Per main-chain block B: how long after B's creation another miner
    /// still created a block that does not descend from B (zero if never).
    pub fn time_to_win_samples(&self, from: f64) -> Vec<f64> {
        #[derive(Clone, Copy)]
        struct Top2 {
            first: (f64, u32),
            second: (f64, u32),
        }
        const NONE: (f64, u32) = (f64::NEG_INFINITY, u32::MAX);
        fn add(top: &mut Top2, cand: (f64, u32)) {
            if cand.1 == top.first.1 {
                if cand.0 > top.first.0 {
                    top.first = cand;
                }
            } else if cand.0 > top.first.0 {
                top.second = top.first;
                top.first = cand;
            } else if cand.1 != top.first.1 && cand.0 > top.second.0 {
                top.second = cand;
            }
        }
        let len = self.main_chain.len();
        let mut per_pos = vec![
            Top2 {
                first: NONE,
                second: NONE,
            };
            len
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            let a = self.attach_pos(i);
            add(&mut per_pos[a], (b.created, b.miner.0));
        }
        let mut out = Vec::new();
        let mut prefix = Top2 {
            first: NONE,
            second: NONE,
        };
        for (p, &i) in self.main_chain.iter().enumerate() {
            let b = &self.blocks[i];
            if p > 0 && b.created >= from {
                let latest = if prefix.first.1 != b.miner.0 {
                    prefix.first.0
                } else {
                    prefix.second.0
                };
                out.push((latest - b.created).max(0.0));
            }
            let here = per_pos[p];
            add(&mut prefix, here.first);
            if here.second.0 > f64::NEG_INFINITY {
                add(&mut prefix, here.second);
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }

    /// Transactions on the main chain created in `[from, last generation]`
    /// per second of that span.
    pub fn throughput(&self, from: f64) -> Option<f64> {
        let span = self.last_generation - from;
        if span <= 0.0 {
            return None;
        }
        let txs: u64 = self
            .main_chain
            .iter()
            .map(|&i| &self.blocks[i])
            .filter(|b| b.created >= from)
            .map(|b| b.txs)
            .sum();
        Some(txs as f64 / span)
    }

    /// Per block created at or after `from`: the `p`-percentile over all
    /// nodes of its arrival delay (nodes that never saw it are skipped).
    pub fn propagation_times(&self, p: f64, from: f64) -> Vec<f64> {
        let mut per_block: Vec<Vec<f64>> = vec![Vec::new(); self.blocks.len()];
        for seen in &self.first_seen {
            for (&i, &t) in seen {
                per_block[i].push(t - self.blocks[i].created);
            }
        }
        per_block
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(i, d)| self.blocks[*i].created >= from && !d.is_empty())
            .filter_map(|(_, d)| nearest_rank(d, p))
            .collect()
    }
}

/// Point consensus delay at time `t` for an `epsilon` fraction of nodes.
pub fn point_consensus_delay(log: &EventLog, t: f64, epsilon: f64) -> f64 {
    LogIndex::new(log).point_consensus_delay(t, epsilon)
}

/// `delta`-percentile over the sampling grid of the point consensus delay.
pub fn consensus_delay(log: &EventLog, epsilon: f64, delta: f64) -> Option<f64> {
    nearest_rank(
        &LogIndex::new(log).consensus_delay_samples(epsilon, 0.0),
        delta,
    )
}

pub fn fairness(log: &EventLog) -> Result<Option<f64>, MetricError> {
    LogIndex::new(log).fairness(0.0)
}

pub fn mining_power_utilization(log: &EventLog) -> Option<f64> {
    LogIndex::new(log).mining_power_utilization(0.0)
}

pub fn time_to_prune(log: &EventLog, delta: f64) -> Option<f64> {
    nearest_rank(&LogIndex::new(log).time_to_prune_samples(0.0), delta)
}

pub fn time_to_win(log: &EventLog, delta: f64) -> Option<f64> {
    nearest_rank(&LogIndex::new(log).time_to_win_samples(0.0), delta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsParams {
    pub epsilon: f64,
    pub delta: f64,
    /// Leading fraction of simulated time excluded from every metric.
    pub warmup_fraction: f64,
}

impl Default for MetricsParams {
    fn default() -> Self {
        MetricsParams {
            epsilon: 0.9,
            delta: 0.9,
            warmup_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub consensus_delay: Option<f64>,
    pub fairness: Option<f64>,
    pub mining_power_utilization: Option<f64>,
    pub time_to_prune: Option<f64>,
    pub time_to_win: Option<f64>,
    pub throughput: Option<f64>,
    /// Mean over blocks of the time until `delta` of the nodes had them.
    pub propagation_time: Option<f64>,
    pub pow_blocks: usize,
    pub main_pow_blocks: usize,
    pub prune_samples: usize,
    pub end_time: f64,
}

impl MetricsReport {
    pub fn compute(log: &EventLog, params: &MetricsParams) -> Result<Self, MetricError> {
        let idx = LogIndex::new(log);
        let from = params.warmup_fraction * idx.end_time;
        let (main_pow_blocks, pow_blocks) = idx.pow_counts(from);
        let prune = idx.time_to_prune_samples(from);
        let prop = idx.propagation_times(params.delta, from);
        Ok(MetricsReport {
            consensus_delay: nearest_rank(
                &idx.consensus_delay_samples(params.epsilon, from),
                params.delta,
            ),
            fairness: idx.fairness(from)?,
            mining_power_utilization: idx.mining_power_utilization(from),
            time_to_prune: nearest_rank(&prune, params.delta),
            time_to_win: nearest_rank(&idx.time_to_win_samples(from), params.delta),
            throughput: idx.throughput(from),
            propagation_time: (!prop.is_empty())
                .then(|| prop.iter().sum::<f64>() / prop.len() as f64),
            pow_blocks,
            main_pow_blocks,
            prune_samples: prune.len(),
            end_time: idx.end_time,
        })
    }

    pub const FIELDS: [&'static str; 11] = [
        "consensus_delay",
        "fairness",
        "mining_power_utilization",
        "time_to_prune",
        "time_to_win",
        "throughput",
        "propagation_time",
        "pow_blocks",
        "main_pow_blocks",
        "prune_samples",
        "end_time",
    ];

    /// Values in [`Self::FIELDS`] order; undefined metrics are `None`.
    pub fn values(&self) -> [Option<f64>; 11] {
        [
            self.consensus_delay,
            self.fairness,
            self.mining_power_utilization,
            self.time_to_prune,
            self.time_to_win,
            self.throughput,
            self.propagation_time,
            Some(self.pow_blocks as f64),
            Some(self.main_pow_blocks as f64),
            Some(self.prune_samples as f64),
            Some(self.end_time),
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        let i = Self::FIELDS.iter().position(|f| *f == name)?;
        self.values()[i]
    }

    /// `key = value` lines; undefined metrics print as `none`.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (k, v) in Self::FIELDS.iter().zip(self.values()) {
            let _ = writeln!(s, "{k} = {}", fmt_opt(v));
        }
        s
    }

    pub fn csv_header() -> String {
        Self::FIELDS.join(",")
    }

    /// One CSV row; undefined metrics are empty cells.
    pub fn to_csv_row(&self) -> String {
        self.values()
            .iter()
            .map(|v| v.map(|x| x.to_string()).unwrap_or_default())
            .collect::<Vec<_>>()
            .join(",")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}
