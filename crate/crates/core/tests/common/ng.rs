//! Shared Bitcoin-NG checks.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use ngsim::chain::{
    heaviest_candidates, Amount, Block, BlockId, BlockKind, BlockTree, MinerId, PayoutKind,
    Protocol, Share, TieBreak,
};
use ngsim::harness::{SimConfig, SimOutcome};
use ngsim::protocol::{epoch_fee_splits, RevenueLedger};

pub fn random_ng_config(
    seed: u64,
    n: usize,
    key_interval: f64,
    micro_interval: f64,
    fork_count: u32,
    first_seen: bool,
) -> SimConfig {
    let mut cfg = SimConfig::for_protocol(Protocol::Ng);
    cfg.n_nodes = n;
    cfg.min_degree = (n - 1).min(4);
    cfg.seed = seed;
    cfg.key_interval_sec = key_interval;
    cfg.microblock_interval_sec = micro_interval;
    cfg.min_microblock_interval_sec = micro_interval.min(1.0) / 2.0;
    cfg.microblock_size_bytes = 10_000;
    cfg.run_length_blocks = 40;
    cfg.fork_count = fork_count;
    cfg.adversary_node = (seed % n as u64) as usize;
    cfg.tie_break = if first_seen {
        TieBreak::FirstSeen
    } else {
        TieBreak::Random
    };
    cfg
}

/// Nearest key block (or genesis) at or above `id`.
fn key_of(tree: &BlockTree, id: BlockId) -> BlockId {
    tree.get(id).unwrap().epoch
}

/// Checks, for every node, that the key blocks of its selected chain are
/// exactly the chain selected in its key-block-only tree.
pub fn key_chain_is_weightless(out: &SimOutcome) -> Result<(), String> {
    for node in &out.nodes {
        let core = node.core();
        let tree = &core.tree;
        // The key-block tree: each key block hangs off the key block
        // heading its parent's epoch.
        let mut key_parent: HashMap<BlockId, BlockId> = HashMap::new();
        for id in tree.leaves().flat_map(|l| tree.path(l).unwrap()) {
            let b = tree.block(id).unwrap();
            if b.kind == BlockKind::KeyBlock && !id.is_genesis() {
                key_parent.insert(id, key_of(tree, b.parent));
            }
        }
        let key_height = |mut k: BlockId| {
            let mut h = 0u64;
            while !k.is_genesis() {
                k = key_parent[&k];
                h += 1;
            }
            h
        };
        let max_h = key_parent.keys().map(|&k| key_height(k)).max().unwrap_or(0);
        let heaviest: BTreeSet<BlockId> = key_parent
            .keys()
            .copied()
            .filter(|&k| key_height(k) == max_h)
            .chain((max_h == 0).then_some(BlockId::GENESIS))
            .collect();
        let tip_epoch = key_of(tree, core.tip);
        if !heaviest.contains(&tip_epoch) {
            return Err(format!(
                "node {}: tip epoch {} is not a heaviest key block",
                core.id, tip_epoch
            ));
        }
        let full_keys: Vec<BlockId> = tree
            .path(core.tip)
            .unwrap()
            .into_iter()
            .filter(|&b| b.is_genesis() || tree.block(b).unwrap().kind == BlockKind::KeyBlock)
            .collect();
        let mut stripped_keys = vec![tip_epoch];
        while !stripped_keys.last().unwrap().is_genesis() {
            let k = key_parent[stripped_keys.last().unwrap()];
            stripped_keys.push(k);
        }
        stripped_keys.reverse();
        if full_keys != stripped_keys {
            return Err(format!("node {}: key chains differ", core.id));
        }
        let cand_epochs: BTreeSet<BlockId> = heaviest_candidates(tree)
            .iter()
            .map(|&c| key_of(tree, c))
            .collect();
        if cand_epochs != heaviest {
            return Err(format!("node {}: candidate epochs differ", core.id));
        }
    }
    Ok(())
}

/// Microblock fees per epoch along the chain ending at `tip`, computed by
/// walking the path.
pub fn epoch_fees_by_walk(tree: &BlockTree, tip: BlockId) -> Vec<(BlockId, Amount)> {
    let mut out: Vec<(BlockId, Amount)> = Vec::new();
    for id in tree.path(tip).unwrap() {
        let b = tree.block(id).unwrap();
        match b.kind {
            BlockKind::KeyBlock => out.push((id, Amount::ZERO)),
            BlockKind::Microblock => out.last_mut().unwrap().1 += b.fees,
            BlockKind::BitcoinBlock => unreachable!(),
        }
    }
    out
}

pub fn check_fee_splits(out: &SimOutcome, leader_bp: u64) -> usize {
    let mut inexact = 0;
    for node in &out.nodes {
        let core = node.core();
        let splits = epoch_fee_splits(&core.tree, core.tip);
        let walked = epoch_fees_by_walk(&core.tree, core.tip);
        // Every epoch but genesis's and the still-open last one is closed by
        // a later key block.
        assert_eq!(splits.len(), walked.len() - 2, "node {}", core.id);
        assert!(!splits.is_empty());
        for ((epoch, total, leader, next), (w_epoch, w_total)) in splits.iter().zip(&walked[1..]) {
            assert_eq!(epoch, w_epoch);
            assert_eq!(total, w_total);
            assert_eq!(*leader + *next, *total, "epoch {epoch}");
            let expect_leader = (u128::from(total.0) * u128::from(leader_bp) / 10_000) as u64;
            assert_eq!(leader.0, expect_leader, "epoch {epoch}");
            if u128::from(total.0) * u128::from(leader_bp) % 10_000 != 0 {
                inexact += 1;
            }
        }
        // The ledger credits exactly those fee shares.
        let ledger = RevenueLedger::from_chain(&core.tree, core.tip, &core.params.remuneration);
        let credited: Amount = ledger
            .credits()
            .iter()
            .filter(|c| matches!(c.kind, PayoutKind::LeaderFees | PayoutKind::NextLeaderFees))
            .map(|c| c.amount)
            .sum();
        assert_eq!(credited, splits.iter().map(|s| s.1).sum());
    }
    inexact
}

pub struct Poisoned {
    pub cheater: MinerId,
    pub poisoner: MinerId,
    pub voided: Amount,
}

pub fn check_single_poison(out: &SimOutcome, adversary: usize) -> Poisoned {
    let cheater = MinerId(adversary as u32);
    let mut found = None;
    let rem = out.nodes[0].core().params.remuneration;
    for node in out
        .nodes
        .iter()
        .filter(|n| n.core().id as usize != adversary)
    {
        let core = node.core();
        let tree = &core.tree;
        let path = tree.path(core.tip).unwrap();
        let carriers: Vec<&Arc<Block>> = path
            .iter()
            .map(|&b| tree.block(b).unwrap())
            .filter(|b| !b.poisons.is_empty())
            .collect();
        assert_eq!(carriers.len(), 1, "node {}", core.id);
        assert_eq!(carriers[0].poisons.len(), 1);
        let carrier = carriers[0];
        let p = &carrier.poisons[0];
        assert_eq!(p.cheater, cheater);
        assert_eq!(p.poisoner_share, Share::from_basis_points(500));

        // Compensation from the blocks themselves: the cheater's key block
        // pays it the subsidy and its next-leader part; the following key
        // block pays its leader part.
        let key = tree.block(p.cheater_epoch).unwrap();
        let after = tree.block(p.placed_after).unwrap();
        let paid = |b: &Block, f: &dyn Fn(PayoutKind, BlockId) -> bool| -> Amount {
            b.coinbase
                .iter()
                .flat_map(|cb| cb.payouts.iter())
                .filter(|x| x.recipient == cheater && f(x.kind, x.epoch))
                .map(|x| x.amount)
                .sum()
        };
        let voided = paid(key, &|k, _| k != PayoutKind::LeaderFees)
            + paid(after, &|k, e| {
                k == PayoutKind::LeaderFees && e == p.cheater_epoch
            });
        assert!(voided >= rem.subsidy);
        let reward = Amount(voided.0 / 20);

        let ledger = RevenueLedger::from_chain(tree, core.tip, &rem);
        assert_eq!(ledger.poisoned(), &[cheater]);
        assert_eq!(ledger.poison_rewards(), &[(carrier.miner, reward)]);
        assert_eq!(ledger.destroyed(), voided - reward);
        let voided_credits: Amount = ledger
            .credits()
            .iter()
            .filter(|c| c.voided)
            .map(|c| c.amount)
            .sum();
        assert_eq!(voided_credits, voided);
        assert!(ledger
            .credits()
            .iter()
            .filter(|c| c.voided)
            .all(|c| c.recipient == cheater));
        let all_cheater: Amount = ledger
            .credits()
            .iter()
            .filter(|c| c.recipient == cheater)
            .map(|c| c.amount)
            .sum();
        assert_eq!(ledger.balance(cheater), all_cheater - voided);

        let this = Poisoned {
            cheater,
            poisoner: carrier.miner,
            voided,
        };
        if let Some(prev) = &found {
            let prev: &Poisoned = prev;
            assert_eq!((prev.poisoner, prev.voided), (this.poisoner, this.voided));
        }
        found = Some(this);
    }
    found.unwrap()
}
