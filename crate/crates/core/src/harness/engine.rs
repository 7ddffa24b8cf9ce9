use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{HarnessError, SimConfig};
use crate::chain::{Amount, Block, BlockKind, Mempool, Protocol, Share};
use crate::eventlog::{EventLog, LogMeta};
use crate::metrics::{MetricsParams, MetricsReport};
use crate::mining::{assign_powers_by_rank, MineSchedule, MinerPower};
use crate::netsim::{generate_topology, EventQueue, LatencyHistogram, Network, Topology};
use crate::protocol::{Ctx, IdSource, Node, NodeParams, Outbox, Remuneration};

/// Independent seed streams derived from the run seed.
#[derive(Debug, Clone, Copy)]
enum Stream {
    Topology = 1,
    Mining = 2,
    Clocks = 3,
    Nodes = 4,
}

/// SplitMix64 finalizer, used to spread one seed into unrelated streams.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn stream_seed(seed: u64, stream: Stream) -> u64 {
    mix(mix(seed) ^ stream as u64)
}

fn share_of(x: f64) -> Share {
    Share::from_basis_points((x * 10_000.0).round() as u32)
}

#[derive(Debug, Clone)]
enum Event {
    Mine {
        generation: u64,
    },
    Timer {
        node: usize,
        generation: u64,
    },
    Arrival {
        from: usize,
        to: usize,
        block: Arc<Block>,
    },
    PowerStep,
}

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub config: SimConfig,
    pub log: EventLog,
    pub topology: Topology,
    pub powers: Vec<MinerPower>,
    /// Final node states, in node order.
    pub nodes: Vec<Node>,
    /// Time of the last processed event.
    pub end_time: f64,
    /// Bitcoin blocks or NG microblocks generated.
    pub payload_blocks: u64,
    /// Proof-of-work blocks generated.
    pub pow_blocks: u64,
    /// Messages still in flight when the run stopped; zero unless
    /// `max_sim_time_sec` cut the drain short.
    pub undelivered: usize,
}

impl SimOutcome {
    pub fn metrics(&self) -> Result<MetricsReport, HarnessError> {
        let params = MetricsParams {
            epsilon: self.config.epsilon,
            delta: self.config.delta,
            warmup_fraction: self.config.warmup_fraction,
        };
        Ok(MetricsReport::compute(&self.log, &params)?)
    }
}

/// Builds the node parameters shared by every node of a run.
pub fn node_params(cfg: &SimConfig) -> NodeParams {
    NodeParams {
        protocol: cfg.protocol,
        tie_break: cfg.tie_break,
        header_bytes: cfg.header_bytes,
        block_size_limit: cfg.payload_block_bytes(),
        key_block_bytes: cfg.key_block_bytes,
        microblock_interval: cfg.microblock_interval_sec,
        min_microblock_interval: cfg.min_microblock_interval_sec,
        remuneration: Remuneration {
            subsidy: Amount(cfg.subsidy),
            leader_share: share_of(cfg.leader_fee_share),
            maturity: cfg.maturity_key_blocks,
            poisoner_share: share_of(cfg.poisoner_share),
        },
        mempool: Mempool::prefilled(
            cfg.mempool_prefill_count,
            cfg.tx_size_bytes,
            Amount(cfg.tx_fee),
        ),
        adversary: (cfg.fork_count >= 2).then_some(cfg.adversary_node as u32),
        fork_count: cfg.fork_count,
    }
}

pub fn load_histogram(cfg: &SimConfig) -> Result<LatencyHistogram, HarnessError> {
    Ok(match &cfg.latency_histogram_path {
        Some(p) => LatencyHistogram::load(p)?,
        None => LatencyHistogram::default_synthetic(),
    })
}

/// Overlay for `cfg`, as the simulation would build it.
pub fn build_topology(cfg: &SimConfig) -> Result<Topology, HarnessError> {
    let hist = load_histogram(cfg)?;
    Ok(generate_topology(
        cfg.n_nodes,
        cfg.min_degree,
        &hist,
        cfg.bandwidth_bits_per_sec,
        stream_seed(cfg.seed, Stream::Topology),
    )?)
}

/// Runs one simulation to completion: proof of work and microblock timers
/// stop once `run_length_blocks` payload blocks exist, then every message in
/// flight is delivered.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimOutcome, HarnessError> {
    cfg.validate()?;
    let topology = build_topology(cfg)?;
    let mut network = Network::new(
        topology.clone(),
        cfg.verification_delay_sec_per_byte,
        cfg.queueing,
    )
    .with_processing_delay(cfg.processing_delay_sec);
    let powers = assign_powers_by_rank(cfg.n_nodes, cfg.power_exponent, cfg.miners_per_rank)?;
    let pow_interval = match cfg.protocol {
        Protocol::Bitcoin => cfg.block_interval_sec,
        Protocol::Ng => cfg.key_interval_sec,
    };
    let mut schedule =
        MineSchedule::new(pow_interval, &powers, stream_seed(cfg.seed, Stream::Mining))?;

    let params = Arc::new(node_params(cfg));
    let mut clock_rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, Stream::Clocks));
    let node_seed = stream_seed(cfg.seed, Stream::Nodes);
    let mut nodes: Vec<Node> = (0..cfg.n_nodes)
        .map(|i| {
            let offset = if cfg.clock_skew_sec > 0.0 {
                clock_rng.random_range(-cfg.clock_skew_sec..=cfg.clock_skew_sec)
            } else {
                0.0
            };
            let neighbors = topology.neighbors(i).iter().map(|l| l.peer).collect();
            Node::new(
                i as u32,
                neighbors,
                Arc::clone(&params),
                mix(node_seed ^ i as u64),
                offset,
            )
        })
        .collect();

    let mut log = EventLog::new(LogMeta {
        protocol: cfg.protocol,
        nodes: cfg.n_nodes as u32,
        powers: powers.iter().map(|p| p.power).collect(),
    });
    let mut queue = EventQueue::new();
    let mut ids = IdSource::default();
    let mut mine_generation = 0u64;
    let (t0, winner) = schedule.next_mine_event(0.0);
    let mut next_winner = winner;
    queue.push(t0, Event::Mine { generation: 0 });
    if cfg.power_step_time_sec > 0.0 && cfg.power_step_factor != 1.0 {
        queue.push(cfg.power_step_time_sec, Event::PowerStep);
    }

    let mut generating = true;
    let mut payload_blocks = 0u64;
    let mut pow_blocks = 0u64;
    let mut end_time = 0.0f64;
    let mut out = Outbox::default();
    while let Some((now, event)) = queue.pop() {
        if now > cfg.max_sim_time_sec {
            queue.push(now, event);
            break;
        }
        let stale = match &event {
            Event::Mine { generation } => !generating || *generation != mine_generation,
            Event::Timer { .. } | Event::PowerStep => !generating,
            Event::Arrival { .. } => false,
        };
        if stale {
            continue;
        }
        end_time = now;
        let mut ctx = Ctx {
            now,
            ids: &mut ids,
            out: &mut out,
        };
        match event {
            Event::Mine { generation } => {
                nodes[next_winner.0 as usize].on_mine(&mut ctx);
                let (t, w) = schedule.next_mine_event(now);
                next_winner = w;
                queue.push(t, Event::Mine { generation });
            }
            Event::Timer { node, generation } => nodes[node].on_timer(&mut ctx, generation),
            Event::Arrival { from, to, block } => nodes[to].on_receive(&mut ctx, block, from),
            Event::PowerStep => {
                schedule.set_mean_interval(schedule.mean_interval() / cfg.power_step_factor)?;
                // Exponential clocks are memoryless, so redrawing is exact.
                mine_generation += 1;
                let (t, w) = schedule.next_mine_event(now);
                next_winner = w;
                queue.push(
                    t,
                    Event::Mine {
                        generation: mine_generation,
                    },
                );
            }
        }

        for r in out.records.drain(..) {
            log.push(r);
        }
        for b in out.generated.drain(..) {
            if b.kind.is_proof_of_work() {
                pow_blocks += 1;
            }
            let payload = match cfg.protocol {
                Protocol::Bitcoin => b.kind == BlockKind::BitcoinBlock,
                Protocol::Ng => b.kind == BlockKind::Microblock,
            };
            if payload {
                payload_blocks += 1;
            }
        }
        if payload_blocks >= cfg.run_length_blocks {
            generating = false;
        }
        for s in out.sends.drain(..) {
            let arrivals = network.send_to(s.from, s.block.size_bytes, now, |p| s.to.contains(&p));
            for (to, at) in arrivals {
                queue.push(
                    at,
                    Event::Arrival {
                        from: s.from,
                        to,
                        block: Arc::clone(&s.block),
                    },
                );
            }
        }
        for t in out.timers.drain(..) {
            queue.push(
                t.at,
                Event::Timer {
                    node: t.node,
                    generation: t.generation,
                },
            );
        }
    }

    let undelivered = queue
        .iter()
        .filter(|e| matches!(e, Event::Arrival { .. }))
        .count();
    let cut_short = queue.peek_time().is_some_and(|t| t > cfg.max_sim_time_sec);
    assert!(
        cut_short || undelivered == 0,
        "drained run left messages in flight"
    );
    Ok(SimOutcome {
        config: cfg.clone(),
        log,
        topology,
        powers,
        nodes,
        end_time,
        payload_blocks,
        pow_blocks,
        undelivered,
    })
}

/// Runs a simulation and computes its metrics.
pub fn run_and_measure(cfg: &SimConfig) -> Result<(SimOutcome, MetricsReport), HarnessError> {
    let outcome = run_simulation(cfg)?;
    let report = outcome.metrics()?;
    Ok((outcome, report))
}
