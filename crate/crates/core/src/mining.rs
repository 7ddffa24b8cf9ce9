//! Simulated proof of work: exponential inter-block times and winners drawn
//! in proportion to mining power.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use thiserror::Error;

use crate::chain::MinerId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MiningError {
    #[error("at least one miner is required")]
    NoMiners,
    #[error("mining powers must be finite, non-negative and sum to a positive value")]
    InvalidPowers,
    #[error("mean interval must be positive, got {0}")]
    InvalidInterval(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinerPower {
    pub miner: MinerId,
    pub power: f64,
}

/// Rank-exponential power distribution: the rank-`k` miner (k = 1..n) gets
/// power proportional to `exp(exponent * k)`, normalized to sum to 1.
pub fn assign_powers(n_miners: usize, exponent: f64) -> Result<Vec<MinerPower>, MiningError> {
    assign_powers_by_rank(n_miners, exponent, 1)
}

/// Like [`assign_powers`], with `miners_per_rank` miners sharing each rank's
/// weight equally. Miner ids are assigned in rank order.
pub fn assign_powers_by_rank(
    n_miners: usize,
    exponent: f64,
    miners_per_rank: usize,
) -> Result<Vec<MinerPower>, MiningError> {
    if n_miners == 0 {
        return Err(MiningError::NoMiners);
    }
    let per_rank = miners_per_rank.max(1);
    let raw: Vec<f64> = (0..n_miners)
        .map(|i| (exponent * (i / per_rank + 1) as f64).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(MiningError::InvalidPowers);
    }
    Ok(raw
        .into_iter()
        .enumerate()
        .map(|(i, w)| MinerPower {
            miner: MinerId(i as u32),
            power: w / total,
        })
        .collect())
}

/// Index of the miner with the largest power (lowest id on ties).
pub fn largest_miner(powers: &[MinerPower]) -> Option<MinerId> {
    powers
        .iter()
        .fold(None::<&MinerPower>, |best, p| match best {
            Some(b) if b.power >= p.power => Some(b),
            _ => Some(p),
        })
        .map(|p| p.miner)
}

/// Fraction of the total power held by `miner`.
pub fn power_fraction(powers: &[MinerPower], miner: MinerId) -> f64 {
    let total: f64 = powers.iter().map(|p| p.power).sum();
    powers
        .iter()
        .filter(|p| p.miner == miner)
        .map(|p| p.power)
        .sum::<f64>()
        / total
}

/// Global exponential race: one clock for the whole network, the winner of
/// each trigger drawn by power.
#[derive(Debug, Clone)]
pub struct MineSchedule {
    mean_interval: f64,
    rng: ChaCha8Rng,
    winners: WeightedIndex<f64>,
    miners: Vec<MinerId>,
}

impl MineSchedule {
    pub fn new(mean_interval: f64, powers: &[MinerPower], seed: u64) -> Result<Self, MiningError> {
        if !(mean_interval > 0.0 && mean_interval.is_finite()) {
            return Err(MiningError::InvalidInterval(mean_interval));
        }
        if powers.is_empty() {
            return Err(MiningError::NoMiners);
        }
        if powers.iter().any(|p| !p.power.is_finite() || p.power < 0.0) {
            return Err(MiningError::InvalidPowers);
        }
        let winners = WeightedIndex::new(powers.iter().map(|p| p.power))
            .map_err(|_| MiningError::InvalidPowers)?;
        Ok(MineSchedule {
            mean_interval,
            rng: ChaCha8Rng::seed_from_u64(seed),
            winners,
            miners: powers.iter().map(|p| p.miner).collect(),
        })
    }

    pub fn mean_interval(&self) -> f64 {
        self.mean_interval
    }

    /// Changes the expected interval, e.g. after total mining power shifts.
    pub fn set_mean_interval(&mut self, mean_interval: f64) -> Result<(), MiningError> {
        if !(mean_interval > 0.0 && mean_interval.is_finite()) {
            return Err(MiningError::InvalidInterval(mean_interval));
        }
        self.mean_interval = mean_interval;
        Ok(())
    }

    /// Time and winner of the next block after `now`.
    pub fn next_mine_event(&mut self, now: f64) -> (f64, MinerId) {
        let gap = Exp::new(1.0 / self.mean_interval)
            .expect("rate is positive")
            .sample(&mut self.rng);
        let winner = self.miners[self.winners.sample(&mut self.rng)];
        (now + gap, winner)
    }
}
