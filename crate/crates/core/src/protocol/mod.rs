//! Node state machines for both protocols.

mod bitcoin;
pub mod ledger;
mod ng;

pub use bitcoin::BitcoinNode;
pub use ledger::{
    bitcoin_coinbase, epoch_fee_splits, key_block_coinbase, Credit, PoisonError, PoisonOutcome,
    Remuneration, RevenueLedger, SpendError,
};
pub use ng::{check_poison, detect_equivocation, validate_microblock, Fraud, NgNode};

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::chain::{
    prefer_candidate, Block, BlockId, BlockKind, BlockTree, Mempool, MinerId, Protocol, TieBreak,
    TxRange,
};
use crate::eventlog::{Action, LogRecord};

/// Why a received block was dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum InvalidReason {
    #[error("signature does not match the epoch key")]
    BadSignature,
    #[error("timestamp lies in the validator's future")]
    InFuture,
    #[error("timestamp gap to the parent is below the minimum")]
    RateExceeded,
    #[error("block exceeds the size limit")]
    TooLarge,
    #[error("transactions already spent on this branch")]
    DoubleSpend,
    #[error("invalid poison transaction")]
    BadPoison,
    #[error("coinbase does not match the remuneration rules")]
    BadCoinbase,
    #[error("block kind not allowed here")]
    WrongKind,
}

/// Parameters shared by all nodes of one run.
#[derive(Debug, Clone)]
pub struct NodeParams {
    pub protocol: Protocol,
    pub tie_break: TieBreak,
    pub header_bytes: u64,
    /// Bitcoin block or NG microblock size limit.
    pub block_size_limit: u64,
    pub key_block_bytes: u64,
    pub microblock_interval: f64,
    pub min_microblock_interval: f64,
    pub remuneration: Remuneration,
    pub mempool: Mempool,
    /// Node that equivocates on the first microblock of each of its epochs.
    pub adversary: Option<u32>,
    pub fork_count: u32,
}

impl NodeParams {
    pub fn payload_capacity(&self) -> u64 {
        self.block_size_limit.saturating_sub(self.header_bytes)
    }
}

/// Block sent to a subset of neighbors.
#[derive(Debug, Clone)]
pub struct Send {
    pub from: usize,
    pub block: Arc<Block>,
    pub to: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimerRequest {
    pub node: usize,
    pub at: f64,
    pub generation: u64,
}

/// Effects a node asks the simulator to carry out.
#[derive(Debug, Default)]
pub struct Outbox {
    pub records: Vec<LogRecord>,
    pub sends: Vec<Send>,
    pub timers: Vec<TimerRequest>,
    pub generated: Vec<Arc<Block>>,
}

/// Run-wide block id allocator.
#[derive(Debug, Clone)]
pub struct IdSource(u64);

impl Default for IdSource {
    fn default() -> Self {
        IdSource(1)
    }
}

impl IdSource {
    pub fn next_id(&mut self) -> BlockId {
        let id = BlockId(self.0);
        self.0 += 1;
        id
    }
}

pub struct Ctx<'a> {
    pub now: f64,
    pub ids: &'a mut IdSource,
    pub out: &'a mut Outbox,
}

/// State common to both node kinds: the local tree, the tip, the orphan
/// buffer and duplicate suppression.
#[derive(Debug, Clone)]
pub struct NodeCore {
    pub id: u32,
    pub neighbors: Vec<usize>,
    pub tree: BlockTree,
    pub tip: BlockId,
    pub clock_offset: f64,
    pub params: Arc<NodeParams>,
    orphans: BTreeMap<BlockId, Vec<(Arc<Block>, Option<usize>)>>,
    seen: HashSet<BlockId>,
    rng: ChaCha8Rng,
}

/// Blocks accepted by one delivery, in insertion order.
#[derive(Debug, Default)]
pub struct Accepted {
    pub blocks: Vec<Arc<Block>>,
    pub tip_changed: bool,
}

impl NodeCore {
    pub fn new(
        id: u32,
        neighbors: Vec<usize>,
        params: Arc<NodeParams>,
        seed: u64,
        clock_offset: f64,
    ) -> Self {
        let tree = BlockTree::with_genesis(params.protocol);
        let mut seen = HashSet::new();
        seen.insert(BlockId::GENESIS);
        NodeCore {
            id,
            neighbors,
            tip: tree.genesis(),
            tree,
            clock_offset,
            params,
            orphans: BTreeMap::new(),
            seen,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn miner(&self) -> MinerId {
        MinerId(self.id)
    }

    pub fn local_time(&self, now: f64) -> f64 {
        now + self.clock_offset
    }

    pub fn orphan_count(&self) -> usize {
        self.orphans.values().map(Vec::len).sum()
    }

    pub fn log(
        &self,
        ctx: &mut Ctx<'_>,
        action: Action,
        block: &Block,
        parent: BlockId,
        fork: Option<BlockId>,
    ) {
        ctx.out.records.push(LogRecord {
            time: ctx.now,
            node: self.id,
            action,
            block: block.id,
            parent,
            kind: block.kind,
            miner: block.miner,
            size: block.size_bytes,
            txs: block.tx_count,
            fork,
        });
    }

    pub fn send(&self, ctx: &mut Ctx<'_>, block: &Arc<Block>, to: Vec<usize>) {
        if !to.is_empty() {
            ctx.out.sends.push(Send {
                from: self.id as usize,
                block: Arc::clone(block),
                to,
            });
        }
    }

    pub fn relay(&self, ctx: &mut Ctx<'_>, block: &Arc<Block>, except: Option<usize>) {
        let to = self
            .neighbors
            .iter()
            .copied()
            .filter(|&p| Some(p) != except)
            .collect();
        self.send(ctx, block, to);
    }

    /// Transaction batch for a new block on top of the current tip.
    pub fn fill(&self, capacity_bytes: u64) -> TxRange {
        let consumed = self.tree.get(self.tip).map_or(0, |e| e.cum_tx);
        self.params.mempool.fill(consumed, capacity_bytes)
    }

    /// Inserts a block this node created, logs it and moves the tip to it.
    pub fn add_own(&mut self, ctx: &mut Ctx<'_>, block: Arc<Block>) {
        self.seen.insert(block.id);
        self.tree
            .insert(Arc::clone(&block))
            .expect("own block extends a known parent");
        self.log(ctx, Action::Generate, &block, block.parent, None);
        ctx.out.generated.push(Arc::clone(&block));
        if block.parent == self.tip {
            self.tip = block.id;
        } else {
            // Only the equivocating adversary creates blocks off its tip.
            self.consider(ctx, block.id);
        }
    }

    /// Handles a delivery: drops duplicates, buffers orphans, validates and
    /// inserts the block and any buffered descendants, relays what it
    /// accepts and re-runs fork choice for each inserted block.
    pub fn receive<V>(
        &mut self,
        ctx: &mut Ctx<'_>,
        block: Arc<Block>,
        from: Option<usize>,
        mut validate: V,
    ) -> Accepted
    where
        V: FnMut(&BlockTree, &Block, f64) -> Result<(), InvalidReason>,
    {
        let mut acc = Accepted::default();
        if !self.seen.insert(block.id) {
            return acc;
        }
        if !self.tree.contains(block.parent) {
            self.orphans
                .entry(block.parent)
                .or_default()
                .push((block, from));
            return acc;
        }
        let mut stack = vec![(block, from)];
        while let Some((b, sender)) = stack.pop() {
            let local = self.local_time(ctx.now);
            if validate(&self.tree, &b, local).is_err() {
                self.log(ctx, Action::Reject, &b, b.parent, None);
                continue;
            }
            self.tree
                .insert(Arc::clone(&b))
                .expect("parent present and id unseen");
            self.log(ctx, Action::Receive, &b, b.parent, None);
            self.relay(ctx, &b, sender);
            if self.consider(ctx, b.id) {
                acc.tip_changed = true;
            }
            if let Some(children) = self.orphans.remove(&b.id) {
                stack.extend(children.into_iter().rev());
            }
            acc.blocks.push(b);
        }
        acc
    }

    /// Fork choice for a freshly inserted leaf; logs a switch when the new
    /// tip does not extend the old one.
    fn consider(&mut self, ctx: &mut Ctx<'_>, candidate: BlockId) -> bool {
        let tie = self.params.tie_break;
        if !prefer_candidate(&self.tree, self.tip, candidate, tie, &mut self.rng) {
            return false;
        }
        let old = self.tip;
        self.tip = candidate;
        let b = Arc::clone(self.tree.block(candidate).expect("candidate inserted"));
        if b.parent != old {
            let fork = self.tree.fork_point(old, candidate).expect("both in tree");
            self.log(ctx, Action::Switch, &b, old, Some(fork));
        }
        true
    }
}

/// Checks shared by every block kind: size and the double-spend rule.
pub(crate) fn validate_payload(
    tree: &BlockTree,
    block: &Block,
    params: &NodeParams,
) -> Result<(), InvalidReason> {
    let limit = match block.kind {
        BlockKind::KeyBlock => params.key_block_bytes.max(params.header_bytes),
        _ => params.block_size_limit,
    };
    if block.size_bytes > limit {
        return Err(InvalidReason::TooLarge);
    }
    let consumed = tree.get(block.parent).map_or(0, |e| e.cum_tx);
    let range = TxRange {
        start: block.tx_start,
        count: block.tx_count,
    };
    if block.tx_count > 0 && !params.mempool.validate(consumed, range) {
        return Err(InvalidReason::DoubleSpend);
    }
    if block.fees != params.mempool.fees_of(range) {
        return Err(InvalidReason::DoubleSpend);
    }
    Ok(())
}

/// A node of either protocol.
#[derive(Debug, Clone)]
pub enum Node {
    Bitcoin(BitcoinNode),
    Ng(NgNode),
}

impl Node {
    pub fn new(
        id: u32,
        neighbors: Vec<usize>,
        params: Arc<NodeParams>,
        seed: u64,
        clock_offset: f64,
    ) -> Self {
        let core = NodeCore::new(id, neighbors, params, seed, clock_offset);
        match core.params.protocol {
            Protocol::Bitcoin => Node::Bitcoin(BitcoinNode::new(core)),
            Protocol::Ng => Node::Ng(NgNode::new(core)),
        }
    }

    pub fn core(&self) -> &NodeCore {
        match self {
            Node::Bitcoin(n) => &n.core,
            Node::Ng(n) => &n.core,
        }
    }

    /// This node won the proof-of-work race.
    pub fn on_mine(&mut self, ctx: &mut Ctx<'_>) {
        match self {
            Node::Bitcoin(n) => n.on_mine_trigger(ctx),
            Node::Ng(n) => n.on_key_block_trigger(ctx),
        }
    }

    pub fn on_receive(&mut self, ctx: &mut Ctx<'_>, block: Arc<Block>, from: usize) {
        match self {
            Node::Bitcoin(n) => n.on_receive_block(ctx, block, from),
            Node::Ng(n) => n.on_receive_block(ctx, block, from),
        }
    }

    pub fn on_timer(&mut self, ctx: &mut Ctx<'_>, generation: u64) {
        if let Node::Ng(n) = self {
            n.on_microblock_timer(ctx, generation);
        }
    }
}
