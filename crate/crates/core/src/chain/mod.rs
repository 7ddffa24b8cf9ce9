//! Block data model, the append-only block tree and chain selection.

mod block;
mod mempool;
mod tree;

pub use block::{
    Amount, Block, BlockId, BlockKind, Coinbase, HeaderDigest, MinerId, Payout, PayoutKind,
    PoisonTransaction, Protocol, PublicKey, Share, Signature, SigningKey,
};
pub use mempool::{Mempool, OutPoint, Transaction, TxId, TxRange};
pub use tree::{
    chain_weight, common_prefix, heaviest_candidates, prefer_candidate, select_main_chain,
    Ancestors, BlockTree, ChainWeight, TieBreak, TreeEntry,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("block {block} references unknown parent {parent}")]
    UnknownParent { block: BlockId, parent: BlockId },
    #[error("block {0} already present")]
    DuplicateBlock(BlockId),
    #[error("unknown block {0}")]
    UnknownBlock(BlockId),
    #[error("empty block selection")]
    EmptySelection,
}
