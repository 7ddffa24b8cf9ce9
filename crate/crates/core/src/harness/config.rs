use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::chain::{Amount, Protocol, TieBreak};
use crate::netsim::Queueing;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("`{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Every knob of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub protocol: Protocol,
    pub n_nodes: usize,
    pub min_degree: usize,
    /// Latency histogram file; `None` uses the bundled synthetic one.
    pub latency_histogram_path: Option<PathBuf>,
    pub bandwidth_bits_per_sec: f64,
    pub queueing: Queueing,
    pub power_exponent: f64,
    pub miners_per_rank: usize,
    pub block_interval_sec: f64,
    pub key_interval_sec: f64,
    pub microblock_interval_sec: f64,
    pub min_microblock_interval_sec: f64,
    pub block_size_bytes: u64,
    pub microblock_size_bytes: u64,
    pub key_block_bytes: u64,
    pub header_bytes: u64,
    pub tx_size_bytes: u64,
    /// Fee per transaction in base units (10^-8 coin).
    pub tx_fee: u64,
    /// Block subsidy in base units.
    pub subsidy: u64,
    pub leader_fee_share: f64,
    pub maturity_key_blocks: u64,
    pub poisoner_share: f64,
    pub mempool_prefill_count: u64,
    /// Bitcoin blocks or NG microblocks to generate before draining.
    pub run_length_blocks: u64,
    pub seed: u64,
    pub verification_delay_sec_per_byte: f64,
    /// Fixed per-hop delay before a receiver relays or mines on a block.
    pub processing_delay_sec: f64,
    pub tie_break: TieBreak,
    /// Each node's clock is offset by a uniform draw in `[-skew, skew]`.
    pub clock_skew_sec: f64,
    /// At this time the total mining power is multiplied by
    /// `power_step_factor` (0 disables).
    pub power_step_time_sec: f64,
    pub power_step_factor: f64,
    /// Hard stop for the event loop.
    pub max_sim_time_sec: f64,
    /// Node that equivocates when `fork_count >= 2`.
    pub adversary_node: usize,
    pub fork_count: u32,
    pub epsilon: f64,
    pub delta: f64,
    pub warmup_fraction: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            protocol: Protocol::Bitcoin,
            n_nodes: 100,
            min_degree: 5,
            latency_histogram_path: None,
            bandwidth_bits_per_sec: 100_000.0,
            queueing: Queueing::Parallel,
            power_exponent: -0.27,
            miners_per_rank: 1,
            block_interval_sec: 600.0,
            key_interval_sec: 100.0,
            microblock_interval_sec: 10.0,
            min_microblock_interval_sec: 1.0,
            block_size_bytes: 1_000_000,
            microblock_size_bytes: 16_740,
            key_block_bytes: 250,
            header_bytes: 80,
            tx_size_bytes: 476,
            tx_fee: 10_000,
            subsidy: Amount::from_coins(25).0,
            leader_fee_share: 0.4,
            maturity_key_blocks: 100,
            poisoner_share: 0.05,
            mempool_prefill_count: 1_000_000_000_000,
            run_length_blocks: 100,
            seed: 1,
            verification_delay_sec_per_byte: 0.0,
            processing_delay_sec: 0.0,
            tie_break: TieBreak::Random,
            clock_skew_sec: 0.0,
            power_step_time_sec: 0.0,
            power_step_factor: 1.0,
            max_sim_time_sec: 1e9,
            adversary_node: 0,
            fork_count: 0,
            epsilon: 0.9,
            delta: 0.9,
            warmup_fraction: 0.05,
        }
    }
}

/// Names of all keys accepted by [`SimConfig::set`].
pub const CONFIG_KEYS: &[&str] = &[
    "protocol",
    "n_nodes",
    "min_degree",
    "latency_histogram_path",
    "bandwidth_bits_per_sec",
    "queueing",
    "power_exponent",
    "miners_per_rank",
    "block_interval_sec",
    "key_interval_sec",
    "microblock_interval_sec",
    "min_microblock_interval_sec",
    "block_size_bytes",
    "microblock_size_bytes",
    "key_block_bytes",
    "header_bytes",
    "tx_size_bytes",
    "tx_fee",
    "subsidy",
    "leader_fee_share",
    "maturity_key_blocks",
    "poisoner_share",
    "mempool_prefill_count",
    "run_length_blocks",
    "seed",
    "verification_delay_sec_per_byte",
    "processing_delay_sec",
    "tie_break",
    "clock_skew_sec",
    "power_step_time_sec",
    "power_step_factor",
    "max_sim_time_sec",
    "adversary_node",
    "fork_count",
    "epsilon",
    "delta",
    "warmup_fraction",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

impl SimConfig {
    /// Default profile for `protocol`.
    pub fn for_protocol(protocol: Protocol) -> Self {
        SimConfig {
            protocol,
            ..SimConfig::default()
        }
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "protocol" => self.protocol = parse(key, v)?,
            "n_nodes" => self.n_nodes = parse(key, v)?,
            "min_degree" => self.min_degree = parse(key, v)?,
            "latency_histogram_path" => {
                self.latency_histogram_path =
                    (!v.is_empty() && v != "default").then(|| PathBuf::from(v))
            }
            "bandwidth_bits_per_sec" => self.bandwidth_bits_per_sec = parse(key, v)?,
            "queueing" => self.queueing = parse(key, v)?,
            "power_exponent" => self.power_exponent = parse(key, v)?,
            "miners_per_rank" => self.miners_per_rank = parse(key, v)?,
            "block_interval_sec" => self.block_interval_sec = parse(key, v)?,
            "key_interval_sec" => self.key_interval_sec = parse(key, v)?,
            "microblock_interval_sec" => self.microblock_interval_sec = parse(key, v)?,
            "min_microblock_interval_sec" => self.min_microblock_interval_sec = parse(key, v)?,
            "block_size_bytes" => self.block_size_bytes = parse(key, v)?,
            "microblock_size_bytes" => self.microblock_size_bytes = parse(key, v)?,
            "key_block_bytes" => self.key_block_bytes = parse(key, v)?,
            "header_bytes" => self.header_bytes = parse(key, v)?,
            "tx_size_bytes" => self.tx_size_bytes = parse(key, v)?,
            "tx_fee" => self.tx_fee = parse(key, v)?,
            "subsidy" => self.subsidy = parse(key, v)?,
            "leader_fee_share" => self.leader_fee_share = parse(key, v)?,
            "maturity_key_blocks" => self.maturity_key_blocks = parse(key, v)?,
            "poisoner_share" => self.poisoner_share = parse(key, v)?,
            "mempool_prefill_count" => self.mempool_prefill_count = parse(key, v)?,
            "run_length_blocks" => self.run_length_blocks = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "verification_delay_sec_per_byte" => {
                self.verification_delay_sec_per_byte = parse(key, v)?
            }
            "processing_delay_sec" => self.processing_delay_sec = parse(key, v)?,
            "tie_break" => self.tie_break = parse(key, v)?,
            "clock_skew_sec" => self.clock_skew_sec = parse(key, v)?,
            "power_step_time_sec" => self.power_step_time_sec = parse(key, v)?,
            "power_step_factor" => self.power_step_factor = parse(key, v)?,
            "max_sim_time_sec" => self.max_sim_time_sec = parse(key, v)?,
            "adversary_node" => self.adversary_node = parse(key, v)?,
            "fork_count" => self.fork_count = parse(key, v)?,
            "epsilon" => self.epsilon = parse(key, v)?,
            "delta" => self.delta = parse(key, v)?,
            "warmup_fraction" => self.warmup_fraction = parse(key, v)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "protocol" => self.protocol.to_string(),
            "n_nodes" => self.n_nodes.to_string(),
            "min_degree" => self.min_degree.to_string(),
            "latency_histogram_path" => self
                .latency_histogram_path
                .as_ref()
                .map_or_else(|| "default".to_string(), |p| p.display().to_string()),
            "bandwidth_bits_per_sec" => self.bandwidth_bits_per_sec.to_string(),
            "queueing" => self.queueing.to_string(),
            "power_exponent" => self.power_exponent.to_string(),
            "miners_per_rank" => self.miners_per_rank.to_string(),
            "block_interval_sec" => self.block_interval_sec.to_string(),
            "key_interval_sec" => self.key_interval_sec.to_string(),
            "microblock_interval_sec" => self.microblock_interval_sec.to_string(),
            "min_microblock_interval_sec" => self.min_microblock_interval_sec.to_string(),
            "block_size_bytes" => self.block_size_bytes.to_string(),
            "microblock_size_bytes" => self.microblock_size_bytes.to_string(),
            "key_block_bytes" => self.key_block_bytes.to_string(),
            "header_bytes" => self.header_bytes.to_string(),
            "tx_size_bytes" => self.tx_size_bytes.to_string(),
            "tx_fee" => self.tx_fee.to_string(),
            "subsidy" => self.subsidy.to_string(),
            "leader_fee_share" => self.leader_fee_share.to_string(),
            "maturity_key_blocks" => self.maturity_key_blocks.to_string(),
            "poisoner_share" => self.poisoner_share.to_string(),
            "mempool_prefill_count" => self.mempool_prefill_count.to_string(),
            "run_length_blocks" => self.run_length_blocks.to_string(),
            "seed" => self.seed.to_string(),
            "verification_delay_sec_per_byte" => self.verification_delay_sec_per_byte.to_string(),
            "processing_delay_sec" => self.processing_delay_sec.to_string(),
            "tie_break" => self.tie_break.to_string(),
            "clock_skew_sec" => self.clock_skew_sec.to_string(),
            "power_step_time_sec" => self.power_step_time_sec.to_string(),
            "power_step_factor" => self.power_step_factor.to_string(),
            "max_sim_time_sec" => self.max_sim_time_sec.to_string(),
            "adversary_node" => self.adversary_node.to_string(),
            "fork_count" => self.fork_count.to_string(),
            "epsilon" => self.epsilon.to_string(),
            "delta" => self.delta.to_string(),
            "warmup_fraction" => self.warmup_fraction.to_string(),
            _ => return None,
        })
    }

    /// Parses `key = value` lines on top of the defaults. The `protocol`
    /// key, wherever it appears, is applied first.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut cfg = SimConfig::default();
        for (k, v) in &pairs {
            if k == "protocol" {
                cfg.set(k, v)?;
            }
        }
        for (k, v) in &pairs {
            if k != "protocol" {
                cfg.set(k, v)?;
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in CONFIG_KEYS {
            let _ = writeln!(s, "{k} = {}", self.get(k).expect("listed key"));
        }
        s
    }

    /// Size limit of the blocks that carry transactions.
    pub fn payload_block_bytes(&self) -> u64 {
        match self.protocol {
            Protocol::Bitcoin => self.block_size_bytes,
            Protocol::Ng => self.microblock_size_bytes,
        }
    }

    /// Interval between the blocks that carry transactions.
    pub fn payload_interval_sec(&self) -> f64 {
        match self.protocol {
            Protocol::Bitcoin => self.block_interval_sec,
            Protocol::Ng => self.microblock_interval_sec,
        }
    }

    /// Transactions per payload block when blocks are full.
    pub fn tx_per_block(&self) -> u64 {
        self.payload_block_bytes().saturating_sub(self.header_bytes) / self.tx_size_bytes.max(1)
    }

    /// Offered load in transactions per second.
    pub fn configured_tx_rate(&self) -> f64 {
        self.tx_per_block() as f64 / self.payload_interval_sec()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn fail(field: &'static str, reason: impl Into<String>) -> Result<(), ConfigError> {
            Err(ConfigError::Invalid {
                field,
                reason: reason.into(),
            })
        }
        let pos = |x: f64| x > 0.0 && x.is_finite();
        let frac = |x: f64| (0.0..=1.0).contains(&x);
        if self.n_nodes <= self.min_degree {
            return fail(
                "n_nodes",
                format!("must exceed min_degree ({})", self.min_degree),
            );
        }
        if !pos(self.bandwidth_bits_per_sec) {
            return fail("bandwidth_bits_per_sec", "must be positive");
        }
        if !pos(self.block_interval_sec) {
            return fail("block_interval_sec", "must be positive");
        }
        if !pos(self.key_interval_sec) {
            return fail("key_interval_sec", "must be positive");
        }
        if !pos(self.microblock_interval_sec) {
            return fail("microblock_interval_sec", "must be positive");
        }
        if !(self.min_microblock_interval_sec >= 0.0) {
            return fail("min_microblock_interval_sec", "must be non-negative");
        }
        if self.protocol == Protocol::Ng
            && self.microblock_interval_sec < self.min_microblock_interval_sec
        {
            return fail(
                "microblock_interval_sec",
                format!(
                    "must be at least min_microblock_interval_sec ({})",
                    self.min_microblock_interval_sec
                ),
            );
        }
        if self.tx_size_bytes == 0 {
            return fail("tx_size_bytes", "must be positive");
        }
        if self.payload_block_bytes() < self.header_bytes {
            return fail(
                match self.protocol {
                    Protocol::Bitcoin => "block_size_bytes",
                    Protocol::Ng => "microblock_size_bytes",
                },
                "must hold at least a header",
            );
        }
        if !frac(self.leader_fee_share) {
            return fail("leader_fee_share", "must lie in [0, 1]");
        }
        if !frac(self.poisoner_share) {
            return fail("poisoner_share", "must lie in [0, 1]");
        }
        if self.run_length_blocks == 0 {
            return fail("run_length_blocks", "must be positive");
        }
        if !(self.verification_delay_sec_per_byte >= 0.0) {
            return fail("verification_delay_sec_per_byte", "must be non-negative");
        }
        if !(self.processing_delay_sec >= 0.0) {
            return fail("processing_delay_sec", "must be non-negative");
        }
        if !(self.clock_skew_sec >= 0.0) {
            return fail("clock_skew_sec", "must be non-negative");
        }
        if !pos(self.power_step_factor) {
            return fail("power_step_factor", "must be positive");
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return fail("epsilon", "must lie in (0, 1]");
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return fail("delta", "must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return fail("warmup_fraction", "must lie in [0, 1)");
        }
        if self.fork_count >= 2 && self.adversary_node >= self.n_nodes {
            return fail("adversary_node", "must name an existing node");
        }
        if self.miners_per_rank == 0 {
            return fail("miners_per_rank", "must be positive");
        }
        Ok(())
    }
}
