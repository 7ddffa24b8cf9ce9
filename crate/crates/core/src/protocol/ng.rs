use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use super::{
    key_block_coinbase, validate_payload, Ctx, InvalidReason, NodeCore, NodeParams, TimerRequest,
};
use crate::chain::{
    Block, BlockId, BlockKind, BlockTree, MinerId, PoisonTransaction, Share, SigningKey,
};

/// Two microblocks signed with one epoch key on the same parent.
#[derive(Debug, Clone)]
pub struct Fraud {
    pub cheater: MinerId,
    pub cheater_epoch: BlockId,
    pub headers: [Arc<Block>; 2],
}

impl Fraud {
    /// Poison transaction for a microblock placed on top of `tip`, if `tip`'s
    /// branch allows one: the cheater's epoch must be followed by a key block
    /// on the branch, and one of the two headers must be on the branch while
    /// the other (the evidence) is not.
    pub fn poison(
        &self,
        tree: &BlockTree,
        tip: BlockId,
        share: Share,
    ) -> Option<PoisonTransaction> {
        let placed_after = tree
            .ancestors(tip)
            .filter(|e| e.block.kind == BlockKind::KeyBlock && !e.block.is_genesis())
            .take_while(|e| e.block.id != self.cheater_epoch)
            .last()
            .map(|e| e.block.id)?;
        if !tree.is_ancestor(self.cheater_epoch, placed_after) || placed_after == self.cheater_epoch
        {
            return None;
        }
        let evidence = self.headers.iter().find(|h| !tree.is_ancestor(h.id, tip))?;
        Some(PoisonTransaction {
            cheater: self.cheater,
            evidence: Arc::clone(evidence),
            cheater_epoch: self.cheater_epoch,
            placed_after,
            poisoner_share: share,
        })
    }
}

fn epoch_key(tree: &BlockTree, parent: BlockId) -> Option<(BlockId, &Block)> {
    let epoch = tree.get(parent)?.epoch;
    let key = tree.block(epoch)?;
    (!key.is_genesis() && key.leader_key.is_some()).then_some((epoch, key.as_ref()))
}

fn signed_by_epoch(tree: &BlockTree, mb: &Block) -> Option<BlockId> {
    let (epoch, key) = epoch_key(tree, mb.parent)?;
    let sig = mb.signature?;
    key.leader_key?
        .verify(&mb.header_digest(), sig)
        .then_some(epoch)
}

/// Reports equivocation when two distinct microblocks share a parent and
/// both verify under that parent's epoch key.
pub fn detect_equivocation(tree: &BlockTree, a: &Arc<Block>, b: &Arc<Block>) -> Option<Fraud> {
    if a.kind != BlockKind::Microblock || b.kind != BlockKind::Microblock {
        return None;
    }
    if a.parent != b.parent || a.id == b.id || a.header_digest() == b.header_digest() {
        return None;
    }
    let ea = signed_by_epoch(tree, a)?;
    let eb = signed_by_epoch(tree, b)?;
    if ea != eb {
        return None;
    }
    let cheater = tree.block(ea)?.miner;
    let (first, second) = if a.id < b.id { (a, b) } else { (b, a) };
    Some(Fraud {
        cheater,
        cheater_epoch: ea,
        headers: [Arc::clone(first), Arc::clone(second)],
    })
}

/// Validity of a poison transaction carried by a block whose parent is
/// `parent`.
pub fn check_poison(
    tree: &BlockTree,
    parent: BlockId,
    poison: &PoisonTransaction,
    params: &NodeParams,
) -> Result<(), InvalidReason> {
    let bad = Err(InvalidReason::BadPoison);
    let Some(epoch) = tree.get(poison.cheater_epoch) else {
        return bad;
    };
    if epoch.block.kind != BlockKind::KeyBlock
        || epoch.block.is_genesis()
        || epoch.block.miner != poison.cheater
    {
        return bad;
    }
    if poison.poisoner_share != params.remuneration.poisoner_share {
        return bad;
    }
    // The poison follows the key block after the cheater's epoch.
    let Some(after) = tree.get(poison.placed_after) else {
        return bad;
    };
    if after.block.kind != BlockKind::KeyBlock
        || after.weight.0 != epoch.weight.0 + 1
        || !tree.is_ancestor(poison.cheater_epoch, poison.placed_after)
        || !tree.is_ancestor(poison.placed_after, parent)
    {
        return bad;
    }
    let Some(parent_entry) = tree.get(parent) else {
        return bad;
    };
    if parent_entry.weight.0 >= epoch.weight.0 + params.remuneration.maturity {
        // The cheater could already have spent the revenue.
        return bad;
    }
    // Evidence: a microblock of the cheater's epoch, off this branch, whose
    // on-branch sibling is also a microblock signed by the same key.
    let ev = &poison.evidence;
    if ev.kind != BlockKind::Microblock || tree.is_ancestor(ev.id, parent) {
        return bad;
    }
    if signed_by_epoch(tree, ev) != Some(poison.cheater_epoch) {
        return bad;
    }
    let Some(ev_parent) = tree.get(ev.parent) else {
        return bad;
    };
    if !tree.is_ancestor(ev.parent, parent) {
        return bad;
    }
    let Some(sibling) = tree.ancestor_at(parent, ev_parent.height + 1) else {
        return bad;
    };
    let sibling = tree.block(sibling).expect("ancestor present");
    if sibling.kind != BlockKind::Microblock || sibling.id == ev.id {
        return bad;
    }
    // One poison per cheater on a branch.
    let earlier = tree
        .ancestors(parent)
        .take_while(|e| e.block.id != poison.cheater_epoch)
        .any(|e| e.block.poisons.iter().any(|p| p.cheater == poison.cheater));
    if earlier {
        return bad;
    }
    Ok(())
}

/// Microblock checks: signature under the epoch key, timestamp not in the
/// future, minimum gap to the parent (closed bound), size, double spends and
/// attached poison transactions.
pub fn validate_microblock(
    tree: &BlockTree,
    mb: &Block,
    local_now: f64,
    params: &NodeParams,
) -> Result<(), InvalidReason> {
    if mb.kind != BlockKind::Microblock {
        return Err(InvalidReason::WrongKind);
    }
    let parent = tree.block(mb.parent).ok_or(InvalidReason::WrongKind)?;
    if signed_by_epoch(tree, mb).is_none() {
        return Err(InvalidReason::BadSignature);
    }
    if mb.created_at > local_now {
        return Err(InvalidReason::InFuture);
    }
    if mb.created_at < parent.created_at + params.min_microblock_interval {
        return Err(InvalidReason::RateExceeded);
    }
    validate_payload(tree, mb, params)?;
    for (i, p) in mb.poisons.iter().enumerate() {
        if mb.poisons[..i].iter().any(|q| q.cheater == p.cheater) {
            return Err(InvalidReason::BadPoison);
        }
        check_poison(tree, mb.parent, p, params)?;
    }
    Ok(())
}

fn validate_key_block(
    tree: &BlockTree,
    kb: &Block,
    params: &NodeParams,
) -> Result<(), InvalidReason> {
    if kb.kind != BlockKind::KeyBlock || kb.leader_key.is_none() || kb.tx_count != 0 {
        return Err(InvalidReason::WrongKind);
    }
    validate_payload(tree, kb, params)?;
    let expected = key_block_coinbase(tree, kb.parent, kb.miner, kb.id, &params.remuneration);
    if kb.coinbase.as_ref() != Some(&expected) {
        return Err(InvalidReason::BadCoinbase);
    }
    Ok(())
}

/// Bitcoin-NG node: becomes leader when it mines a key block and then
/// serializes microblocks until a later key block supersedes its epoch.
#[derive(Debug, Clone)]
pub struct NgNode {
    pub core: NodeCore,
    keys: BTreeMap<BlockId, SigningKey>,
    timer_generation: u64,
    timer_epoch: Option<BlockId>,
    fraud_index: HashMap<(BlockId, BlockId), Arc<Block>>,
    frauds: Vec<Fraud>,
}

impl NgNode {
    pub fn new(core: NodeCore) -> Self {
        NgNode {
            core,
            keys: BTreeMap::new(),
            timer_generation: 0,
            timer_epoch: None,
            fraud_index: HashMap::new(),
            frauds: Vec::new(),
        }
    }

    fn is_adversary(&self) -> bool {
        self.core.params.adversary == Some(self.core.id) && self.core.params.fork_count >= 2
    }

    /// Epoch this node currently leads on its selected branch.
    pub fn leading_epoch(&self) -> Option<BlockId> {
        let epoch = self.core.tree.get(self.core.tip)?.epoch;
        self.keys.contains_key(&epoch).then_some(epoch)
    }

    pub fn is_leader(&self) -> bool {
        self.leading_epoch().is_some()
    }

    /// Equivocations this node has observed, one per cheater.
    pub fn frauds(&self) -> &[Fraud] {
        &self.frauds
    }

    fn ensure_timer(&mut self, ctx: &mut Ctx<'_>) {
        let lead = self.leading_epoch();
        if lead == self.timer_epoch {
            return;
        }
        self.timer_generation += 1;
        self.timer_epoch = lead;
        if lead.is_some() {
            ctx.out.timers.push(TimerRequest {
                node: self.core.id as usize,
                at: ctx.now + self.core.params.microblock_interval,
                generation: self.timer_generation,
            });
        }
    }

    pub fn on_key_block_trigger(&mut self, ctx: &mut Ctx<'_>) {
        let c = &self.core;
        let id = ctx.ids.next_id();
        let key = SigningKey::from_seed((u64::from(c.id) << 40) ^ id.0);
        let mut b = Block::new(
            id,
            c.tip,
            BlockKind::KeyBlock,
            c.miner(),
            c.local_time(ctx.now),
        );
        let consumed = c.tree.get(c.tip).map_or(0, |e| e.cum_tx);
        b.tx_start = consumed;
        b.size_bytes = c.params.key_block_bytes;
        b.leader_key = Some(key.public());
        b.coinbase = Some(key_block_coinbase(
            &c.tree,
            c.tip,
            c.miner(),
            id,
            &c.params.remuneration,
        ));
        self.keys.insert(id, key);
        let b = Arc::new(b);
        self.core.add_own(ctx, Arc::clone(&b));
        self.core.relay(ctx, &b, None);
        self.ensure_timer(ctx);
    }

    pub fn on_microblock_timer(&mut self, ctx: &mut Ctx<'_>, generation: u64) {
        if generation != self.timer_generation {
            return;
        }
        let Some(epoch) = self.leading_epoch() else {
            return;
        };
        let params = Arc::clone(&self.core.params);
        let tip = Arc::clone(self.core.tree.block(self.core.tip).expect("tip in tree"));
        let local = self.core.local_time(ctx.now);
        let earliest = tip.created_at + params.min_microblock_interval;
        if local < earliest - 1e-9 {
            ctx.out.timers.push(TimerRequest {
                node: self.core.id as usize,
                at: ctx.now + (earliest - local),
                generation,
            });
            return;
        }
        let created_at = local.max(earliest);
        let key = self.keys[&epoch];

        if self.is_adversary() && tip.kind == BlockKind::KeyBlock {
            self.equivocate(ctx, &tip, created_at, &key);
        } else {
            let poisons = self.pending_poisons(&params);
            let mb = self.make_microblock(ctx, &tip, created_at, &key, 0, poisons);
            self.core.add_own(ctx, Arc::clone(&mb));
            self.core.relay(ctx, &mb, None);
        }
        ctx.out.timers.push(TimerRequest {
            node: self.core.id as usize,
            at: ctx.now + params.microblock_interval,
            generation,
        });
    }

    fn pending_poisons(&self, params: &NodeParams) -> Vec<PoisonTransaction> {
        if self.core.params.adversary == Some(self.core.id) {
            return Vec::new();
        }
        let mut out: Vec<PoisonTransaction> = Vec::new();
        for f in &self.frauds {
            if let Some(p) = f.poison(
                &self.core.tree,
                self.core.tip,
                params.remuneration.poisoner_share,
            ) {
                if check_poison(&self.core.tree, self.core.tip, &p, params).is_ok() {
                    out.push(p);
                }
            }
        }
        out
    }

    fn make_microblock(
        &self,
        ctx: &mut Ctx<'_>,
        parent: &Block,
        created_at: f64,
        key: &SigningKey,
        tag: u64,
        poisons: Vec<PoisonTransaction>,
    ) -> Arc<Block> {
        let c = &self.core;
        let p = &c.params;
        let poison_bytes = poisons.len() as u64 * p.header_bytes;
        let range = c.fill(p.payload_capacity().saturating_sub(poison_bytes));
        let mut b = Block::new(
            ctx.ids.next_id(),
            parent.id,
            BlockKind::Microblock,
            c.miner(),
            created_at,
        );
        b.tx_start = range.start;
        b.tx_count = range.count;
        b.fees = p.mempool.fees_of(range);
        b.size_bytes = p.header_bytes + poison_bytes + range.count * p.mempool.tx_size();
        b.payload_tag = tag;
        b.poisons = poisons;
        b.signature = Some(key.sign(&b.header_digest()));
        Arc::new(b)
    }

    /// Signs `fork_count` different microblocks on the epoch's key block and
    /// sends each to a disjoint share of the neighbors; keeps the first.
    fn equivocate(&mut self, ctx: &mut Ctx<'_>, tip: &Block, created_at: f64, key: &SigningKey) {
        let k = self.core.params.fork_count as usize;
        let siblings: Vec<Arc<Block>> = (0..k)
            .map(|i| self.make_microblock(ctx, tip, created_at, key, i as u64 + 1, Vec::new()))
            .collect();
        for (i, mb) in siblings.iter().enumerate() {
            self.core.add_own(ctx, Arc::clone(mb));
            let to = self
                .core
                .neighbors
                .iter()
                .enumerate()
                .filter(|(j, _)| j % k == i)
                .map(|(_, &p)| p)
                .collect();
            self.core.send(ctx, mb, to);
        }
    }

    pub fn on_receive_block(&mut self, ctx: &mut Ctx<'_>, block: Arc<Block>, from: usize) {
        let params = Arc::clone(&self.core.params);
        let acc = self
            .core
            .receive(ctx, block, Some(from), |tree, b, local| match b.kind {
                BlockKind::KeyBlock => validate_key_block(tree, b, &params),
                BlockKind::Microblock => validate_microblock(tree, b, local, &params),
                BlockKind::BitcoinBlock => Err(InvalidReason::WrongKind),
            });
        for b in &acc.blocks {
            self.index_microblock(b);
        }
        if acc.tip_changed {
            self.ensure_timer(ctx);
        }
    }

    fn index_microblock(&mut self, b: &Arc<Block>) {
        if b.kind != BlockKind::Microblock {
            return;
        }
        let epoch = self.core.tree.get(b.id).expect("inserted").epoch;
        match self.fraud_index.get(&(epoch, b.parent)) {
            None => {
                self.fraud_index.insert((epoch, b.parent), Arc::clone(b));
            }
            Some(first) => {
                if let Some(f) = detect_equivocation(&self.core.tree, first, b) {
                    if !self.frauds.iter().any(|g| g.cheater == f.cheater) {
                        self.frauds.push(f);
                    }
                }
            }
        }
    }
}
