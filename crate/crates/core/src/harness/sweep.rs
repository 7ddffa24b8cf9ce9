use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;

use super::{run_and_measure, SimConfig};
use crate::chain::Protocol;
use crate::metrics::MetricsReport;

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Payload block frequency in blocks per second (Bitcoin blocks or NG
    /// microblocks).
    BlockFrequency,
    /// Payload block size in bytes.
    BlockSize,
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "frequency" | "block_frequency" => Ok(SweepAxis::BlockFrequency),
            "size" | "block_size" => Ok(SweepAxis::BlockSize),
            other => Err(format!(
                "unknown sweep axis `{other}` (expected frequency or size)"
            )),
        }
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::BlockFrequency => "frequency",
            SweepAxis::BlockSize => "size",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: SimConfig,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// On a frequency sweep, resize blocks so the offered tx/s of the base
    /// configuration is kept at every point.
    pub constant_payload: bool,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    /// Configuration of one sweep point, seed not yet applied.
    pub fn point_config(&self, value: f64) -> SimConfig {
        let mut cfg = self.base.clone();
        match self.axis {
            SweepAxis::BlockFrequency => {
                let interval = 1.0 / value;
                let rate = self.base.configured_tx_rate();
                match cfg.protocol {
                    Protocol::Bitcoin => cfg.block_interval_sec = interval,
                    Protocol::Ng => cfg.microblock_interval_sec = interval,
                }
                if self.constant_payload {
                    let txs = ((rate * interval).round() as u64).max(1);
                    let size = cfg.header_bytes + txs * cfg.tx_size_bytes;
                    match cfg.protocol {
                        Protocol::Bitcoin => cfg.block_size_bytes = size,
                        Protocol::Ng => cfg.microblock_size_bytes = size,
                    }
                }
            }
            SweepAxis::BlockSize => {
                let size = value.round() as u64;
                match cfg.protocol {
                    Protocol::Bitcoin => cfg.block_size_bytes = size,
                    Protocol::Ng => cfg.microblock_size_bytes = size,
                }
            }
        }
        cfg
    }
}

/// Results of one axis value over all seeds.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub config: SimConfig,
    /// One entry per seed, in seed order.
    pub runs: Vec<Result<MetricsReport, String>>,
}

impl SweepPoint {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.is_err()).count()
    }

    /// Defined values of `metric` over the successful runs.
    pub fn samples(&self, metric: &str) -> Vec<f64> {
        self.runs
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .filter_map(|r| r.get(metric))
            .collect()
    }

    /// Mean, min and max of `metric`, if any run defines it.
    pub fn summary(&self, metric: &str) -> Option<(f64, f64, f64)> {
        let xs = self.samples(metric);
        if xs.is_empty() {
            return None;
        }
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some((mean, min, max))
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
}

/// Pseudo-metric holding each point's offered load in tx/s.
pub const CONFIGURED_TX_RATE: &str = "configured_tx_rate";

impl SweepResult {
    pub const CSV_HEADER: &'static str = "axis,value,metric,mean,min,max,n,failures";

    /// One row per (axis value, metric); empty statistics when no run
    /// defines the metric.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for p in &self.points {
            let rate = p.config.configured_tx_rate();
            let _ = writeln!(
                s,
                "{},{},{CONFIGURED_TX_RATE},{rate},{rate},{rate},{},{}",
                self.axis,
                p.value,
                p.runs.len(),
                p.failures()
            );
            for metric in MetricsReport::FIELDS {
                let n = p.samples(metric).len();
                match p.summary(metric) {
                    Some((mean, min, max)) => {
                        let _ = writeln!(
                            s,
                            "{},{},{metric},{mean},{min},{max},{n},{}",
                            self.axis,
                            p.value,
                            p.failures()
                        );
                    }
                    None => {
                        let _ = writeln!(
                            s,
                            "{},{},{metric},,,,0,{}",
                            self.axis,
                            p.value,
                            p.failures()
                        );
                    }
                }
            }
        }
        s
    }
}

/// Runs every (value, seed) pair in parallel. A failing run is recorded
/// and the remaining runs continue.
pub fn run_sweep(spec: &SweepSpec) -> SweepResult {
    let jobs: Vec<(usize, SimConfig)> = spec
        .values
        .iter()
        .enumerate()
        .flat_map(|(i, &v)| {
            let cfg = spec.point_config(v);
            spec.seeds.iter().map(move |&seed| {
                (
                    i,
                    SimConfig {
                        seed,
                        ..cfg.clone()
                    },
                )
            })
        })
        .collect();
    let results: Vec<(usize, Result<MetricsReport, String>)> = jobs
        .par_iter()
        .map(|(i, cfg)| {
            (
                *i,
                run_and_measure(cfg)
                    .map(|(_, r)| r)
                    .map_err(|e| e.to_string()),
            )
        })
        .collect();
    let mut points: Vec<SweepPoint> = spec
        .values
        .iter()
        .map(|&v| SweepPoint {
            value: v,
            config: spec.point_config(v),
            runs: Vec::new(),
        })
        .collect();
    for (i, r) in results {
        points[i].runs.push(r);
    }
    SweepResult {
        axis: spec.axis,
        points,
    }
}
