//! Bitcoin-NG remuneration: coinbase construction, revenue maturity and the
//! effect of poison transactions.

use thiserror::Error;

use crate::chain::{
    Amount, BlockId, BlockKind, BlockTree, Coinbase, MinerId, Payout, PayoutKind,
    PoisonTransaction, Share,
};

/// Remuneration parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Remuneration {
    pub subsidy: Amount,
    /// Share of an epoch's fees kept by the leader that serialized them.
    pub leader_share: Share,
    /// Key blocks that must follow a coinbase before it can be spent.
    pub maturity: u64,
    pub poisoner_share: Share,
}

impl Default for Remuneration {
    fn default() -> Self {
        Remuneration {
            subsidy: Amount::from_coins(25),
            leader_share: Share::from_basis_points(4000),
            maturity: 100,
            poisoner_share: Share::from_basis_points(500),
        }
    }
}

impl Remuneration {
    pub fn next_leader_share(&self) -> Share {
        self.leader_share.complement()
    }

    /// Splits an epoch's fees into the serializing leader's part and the
    /// next leader's part. The two always add up to `fees`.
    pub fn split(&self, fees: Amount) -> (Amount, Amount) {
        let leader = self.leader_share.of(fees);
        (leader, fees - leader)
    }
}

/// Coinbase of a key block mined by `miner` on top of `parent`: the subsidy,
/// plus the split of the fees the previous leader serialized on this branch.
pub fn key_block_coinbase(
    tree: &BlockTree,
    parent: BlockId,
    miner: MinerId,
    new_key: BlockId,
    rem: &Remuneration,
) -> Coinbase {
    let mut payouts = vec![Payout {
        recipient: miner,
        amount: rem.subsidy,
        kind: PayoutKind::Subsidy,
        epoch: new_key,
    }];
    if let Some(p) = tree.get(parent) {
        let epoch = tree.get(p.epoch).expect("epoch block is in the tree");
        if !epoch.block.is_genesis() {
            let fees = p.cum_fees - epoch.cum_fees;
            let (prev, next) = rem.split(fees);
            payouts.push(Payout {
                recipient: epoch.block.miner,
                amount: prev,
                kind: PayoutKind::LeaderFees,
                epoch: p.epoch,
            });
            payouts.push(Payout {
                recipient: miner,
                amount: next,
                kind: PayoutKind::NextLeaderFees,
                epoch: p.epoch,
            });
        }
    }
    Coinbase { payouts }
}

/// Coinbase of a Bitcoin block: subsidy plus all of its own fees.
pub fn bitcoin_coinbase(id: BlockId, miner: MinerId, fees: Amount, rem: &Remuneration) -> Coinbase {
    Coinbase {
        payouts: vec![
            Payout {
                recipient: miner,
                amount: rem.subsidy,
                kind: PayoutKind::Subsidy,
                epoch: id,
            },
            Payout {
                recipient: miner,
                amount: fees,
                kind: PayoutKind::BlockFees,
                epoch: id,
            },
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PoisonError {
    #[error("revenue of miner {0} was already spent")]
    TooLate(MinerId),
    #[error("miner {0} was already poisoned")]
    Duplicate(MinerId),
    #[error("no revenue recorded for epoch {0}")]
    UnknownEpoch(BlockId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpendError {
    #[error("credit {0} does not exist")]
    UnknownCredit(usize),
    #[error("credit matures at key weight {matures_at}, chain is at {at}")]
    Immature { matures_at: u64, at: u64 },
    #[error("credit was voided by a poison transaction")]
    Voided,
    #[error("credit already spent")]
    AlreadySpent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Credit {
    pub recipient: MinerId,
    pub amount: Amount,
    pub kind: PayoutKind,
    /// Epoch the payout belongs to.
    pub epoch: BlockId,
    /// Key block whose coinbase carries the payout.
    pub paid_in: BlockId,
    /// Key weight of `paid_in`.
    pub paid_at_weight: u64,
    pub voided: bool,
    pub spent: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoisonOutcome {
    pub voided: Amount,
    pub reward: Amount,
    pub destroyed: Amount,
}

/// Revenue credited along one chain.
#[derive(Debug, Clone, Default)]
pub struct RevenueLedger {
    credits: Vec<Credit>,
    poisoned: Vec<MinerId>,
    poison_rewards: Vec<(MinerId, Amount)>,
    destroyed: Amount,
    maturity: u64,
}

impl RevenueLedger {
    pub fn new(maturity: u64) -> Self {
        RevenueLedger {
            maturity,
            ..Default::default()
        }
    }

    /// Replays the chain ending at `tip`: credits every coinbase and applies
    /// every poison transaction in chain order.
    pub fn from_chain(tree: &BlockTree, tip: BlockId, rem: &Remuneration) -> Self {
        let mut ledger = RevenueLedger::new(rem.maturity);
        let path = tree.path(tip).unwrap_or_default();
        for id in path {
            let e = tree.get(id).expect("path block is in the tree");
            if let Some(cb) = &e.block.coinbase {
                ledger.credit_coinbase(id, e.weight.0, cb);
            }
            for p in &e.block.poisons {
                // Rejected poisons never make it into a valid chain; ignore
                // defensively if one does.
                let _ = ledger.apply_poison(p, e.block.miner);
            }
        }
        ledger
    }

    pub fn credit_coinbase(&mut self, block: BlockId, weight: u64, coinbase: &Coinbase) {
        for p in &coinbase.payouts {
            self.credits.push(Credit {
                recipient: p.recipient,
                amount: p.amount,
                kind: p.kind,
                epoch: p.epoch,
                paid_in: block,
                paid_at_weight: weight,
                voided: false,
                spent: false,
            });
        }
    }

    pub fn credits(&self) -> &[Credit] {
        &self.credits
    }

    /// Live (not voided) revenue of `miner`, poison rewards included.
    pub fn balance(&self, miner: MinerId) -> Amount {
        let credited: Amount = self
            .credits
            .iter()
            .filter(|c| c.recipient == miner && !c.voided)
            .map(|c| c.amount)
            .sum();
        credited
            + self
                .poison_rewards
                .iter()
                .filter(|(m, _)| *m == miner)
                .map(|(_, a)| *a)
                .sum()
    }

    pub fn destroyed(&self) -> Amount {
        self.destroyed
    }

    pub fn poisoned(&self) -> &[MinerId] {
        &self.poisoned
    }

    pub fn poison_rewards(&self) -> &[(MinerId, Amount)] {
        &self.poison_rewards
    }

    /// The cheater's compensation for leading `epoch`: everything its key
    /// block paid it, plus its fee share paid by the next key block.
    fn compensation_indices(&self, cheater: MinerId, epoch: BlockId) -> Vec<usize> {
        self.credits
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                c.recipient == cheater
                    && ((c.paid_in == epoch && c.kind != PayoutKind::LeaderFees)
                        || (c.epoch == epoch && c.kind == PayoutKind::LeaderFees))
            })
            .map(|(i, _)| i)
            .collect()
    }

    pub fn apply_poison(
        &mut self,
        poison: &PoisonTransaction,
        poisoner: MinerId,
    ) -> Result<PoisonOutcome, PoisonError> {
        if self.poisoned.contains(&poison.cheater) {
            return Err(PoisonError::Duplicate(poison.cheater));
        }
        let idx = self.compensation_indices(poison.cheater, poison.cheater_epoch);
        if idx.is_empty() {
            return Err(PoisonError::UnknownEpoch(poison.cheater_epoch));
        }
        if idx.iter().any(|&i| self.credits[i].spent) {
            return Err(PoisonError::TooLate(poison.cheater));
        }
        let voided: Amount = idx.iter().map(|&i| self.credits[i].amount).sum();
        for &i in &idx {
            self.credits[i].voided = true;
        }
        let reward = poison.poisoner_share.of(voided);
        self.poisoned.push(poison.cheater);
        self.poison_rewards.push((poisoner, reward));
        self.destroyed += voided - reward;
        Ok(PoisonOutcome {
            voided,
            reward,
            destroyed: voided - reward,
        })
    }

    /// Spends credit `index` on a chain whose key weight is `at_weight`.
    pub fn spend(&mut self, index: usize, at_weight: u64) -> Result<Amount, SpendError> {
        let maturity = self.maturity;
        let c = self
            .credits
            .get_mut(index)
            .ok_or(SpendError::UnknownCredit(index))?;
        if c.voided {
            return Err(SpendError::Voided);
        }
        if c.spent {
            return Err(SpendError::AlreadySpent);
        }
        let matures_at = c.paid_at_weight + maturity;
        if at_weight < matures_at {
            return Err(SpendError::Immature {
                matures_at,
                at: at_weight,
            });
        }
        c.spent = true;
        Ok(c.amount)
    }
}

/// Fees serialized in each completed epoch of the chain ending at `tip`,
/// with the two shares the following key block paid for it:
/// `(epoch, total fees, previous-leader part, next-leader part)`.
pub fn epoch_fee_splits(tree: &BlockTree, tip: BlockId) -> Vec<(BlockId, Amount, Amount, Amount)> {
    let mut out = Vec::new();
    for id in tree.path(tip).unwrap_or_default() {
        let e = tree.get(id).expect("path block");
        if e.block.kind != BlockKind::KeyBlock || e.block.is_genesis() {
            continue;
        }
        let parent = tree.get(e.block.parent).expect("parent");
        let epoch = tree.get(parent.epoch).expect("epoch");
        if epoch.block.is_genesis() {
            continue;
        }
        let total = parent.cum_fees - epoch.cum_fees;
        let paid = |kind: PayoutKind| -> Amount {
            e.block
                .coinbase
                .iter()
                .flat_map(|cb| cb.payouts.iter())
                .filter(|p| p.kind == kind && p.epoch == parent.epoch)
                .map(|p| p.amount)
                .sum()
        };
        out.push((
            parent.epoch,
            total,
            paid(PayoutKind::LeaderFees),
            paid(PayoutKind::NextLeaderFees),
        ));
    }
    out
}
