use std::sync::Arc;

use super::{bitcoin_coinbase, validate_payload, Ctx, InvalidReason, NodeCore};
use crate::chain::{Block, BlockKind};

/// Nakamoto node: mines on its heaviest known chain and adopts heavier
/// chains as they arrive.
#[derive(Debug, Clone)]
pub struct BitcoinNode {
    pub core: NodeCore,
}

impl BitcoinNode {
    pub fn new(core: NodeCore) -> Self {
        BitcoinNode { core }
    }

    pub fn on_mine_trigger(&mut self, ctx: &mut Ctx<'_>) {
        let c = &self.core;
        let p = &c.params;
        let range = c.fill(p.payload_capacity());
        let id = ctx.ids.next_id();
        let mut b = Block::new(
            id,
            c.tip,
            BlockKind::BitcoinBlock,
            c.miner(),
            c.local_time(ctx.now),
        );
        b.tx_start = range.start;
        b.tx_count = range.count;
        b.size_bytes = p.header_bytes + range.count * p.mempool.tx_size();
        b.fees = p.mempool.fees_of(range);
        b.coinbase = Some(bitcoin_coinbase(id, c.miner(), b.fees, &p.remuneration));
        let b = Arc::new(b);
        self.core.add_own(ctx, Arc::clone(&b));
        self.core.relay(ctx, &b, None);
    }

    pub fn on_receive_block(&mut self, ctx: &mut Ctx<'_>, block: Arc<Block>, from: usize) {
        let params = Arc::clone(&self.core.params);
        self.core.receive(ctx, block, Some(from), |tree, b, _| {
            if b.kind != BlockKind::BitcoinBlock {
                return Err(InvalidReason::WrongKind);
            }
            validate_payload(tree, b, &params)
        });
    }
}
