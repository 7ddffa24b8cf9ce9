use std::collections::HashMap;

use crate::chain::{BlockId, BlockKind, MinerId, Protocol};
use crate::eventlog::{Action, EventLog};

/// Block facts recovered from the log.
#[derive(Debug, Clone)]
pub struct BlockInfo {
    pub id: BlockId,
    /// Dense index of the parent (genesis points to itself).
    pub parent: usize,
    pub kind: BlockKind,
    pub miner: MinerId,
    /// Time of the generate record (0 for genesis).
    pub created: f64,
    pub txs: u64,
    /// Proof-of-work blocks on the path, genesis excluded.
    pub weight: u64,
    pub height: u64,
}

impl BlockInfo {
    pub fn is_pow(&self) -> bool {
        self.height > 0 && self.kind.is_proof_of_work()
    }
}

/// Dense, analysis-friendly view of an event log.
#[derive(Debug, Clone)]
pub struct LogIndex<'a> {
    pub log: &'a EventLog,
    pub blocks: Vec<BlockInfo>,
    pub index_of: HashMap<BlockId, usize>,
    pub n_nodes: usize,
    /// Per node: first generate/receive time of each block (dense index).
    pub first_seen: Vec<HashMap<usize, f64>>,
    /// Final tip of each node.
    pub final_tips: Vec<usize>,
    /// Final main chain from genesis (dense indices).
    pub main_chain: Vec<usize>,
    /// Position of each block on the main chain, if it is on it.
    pub main_pos: Vec<Option<usize>>,
    pub end_time: f64,
    /// Time of the last generate record.
    pub last_generation: f64,
}

/// Applies one record to a tip: extensions and switches move it.
pub fn tip_after(tip: BlockId, action: Action, block: BlockId, parent: BlockId) -> BlockId {
    match action {
        Action::Generate | Action::Receive if parent == tip => block,
        Action::Switch => block,
        _ => tip,
    }
}

impl<'a> LogIndex<'a> {
    pub fn new(log: &'a EventLog) -> Self {
        let n_nodes = log.meta.nodes as usize;
        let genesis_kind = match log.meta.protocol {
            Protocol::Bitcoin => BlockKind::BitcoinBlock,
            Protocol::Ng => BlockKind::KeyBlock,
        };
        let mut blocks = vec![BlockInfo {
            id: BlockId::GENESIS,
            parent: 0,
            kind: genesis_kind,
            miner: MinerId::NONE,
            created: 0.0,
            txs: 0,
            weight: 0,
            height: 0,
        }];
        let mut index_of = HashMap::from([(BlockId::GENESIS, 0usize)]);
        let mut last_generation: f64 = 0.0;
        for r in &log.records {
            if r.action != Action::Generate || index_of.contains_key(&r.block) {
                continue;
            }
            let parent = *index_of
                .get(&r.parent)
                .expect("a block's parent is generated before it");
            let p = &blocks[parent];
            let (weight, height) = (
                p.weight + u64::from(r.kind.is_proof_of_work()),
                p.height + 1,
            );
            index_of.insert(r.block, blocks.len());
            blocks.push(BlockInfo {
                id: r.block,
                parent,
                kind: r.kind,
                miner: r.miner,
                created: r.time,
                txs: r.txs,
                weight,
                height,
            });
            last_generation = last_generation.max(r.time);
        }

        let mut first_seen = vec![HashMap::new(); n_nodes];
        let mut tips = vec![BlockId::GENESIS; n_nodes];
        for r in &log.records {
            let node = r.node as usize;
            if matches!(r.action, Action::Generate | Action::Receive) {
                let i = index_of[&r.block];
                first_seen[node].entry(i).or_insert(r.time);
            }
            tips[node] = tip_after(tips[node], r.action, r.block, r.parent);
        }
        let final_tips: Vec<usize> = tips.iter().map(|t| index_of[t]).collect();

        // Plurality of final tips; ties go to the earliest-created block,
        // then the lowest id.
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for &t in &final_tips {
            *counts.entry(t).or_default() += 1;
        }
        let head = counts
            .iter()
            .max_by(|a, b| {
                a.1.cmp(b.1)
                    .then_with(|| blocks[*b.0].created.total_cmp(&blocks[*a.0].created))
                    .then_with(|| blocks[*b.0].id.cmp(&blocks[*a.0].id))
            })
            .map_or(0, |(&i, _)| i);
        let mut main_chain = vec![head];
        let mut cur = head;
        while cur != 0 {
            cur = blocks[cur].parent;
            main_chain.push(cur);
        }
        main_chain.reverse();
        let mut main_pos = vec![None; blocks.len()];
        for (pos, &i) in main_chain.iter().enumerate() {
            main_pos[i] = Some(pos);
        }
        LogIndex {
            log,
            blocks,
            index_of,
            n_nodes,
            first_seen,
            final_tips,
            main_chain,
            main_pos,
            end_time: log.end_time(),
            last_generation,
        }
    }

    pub fn protocol(&self) -> Protocol {
        self.log.meta.protocol
    }

    pub fn is_main(&self, i: usize) -> bool {
        self.main_pos[i].is_some()
    }

    /// Position on the main chain of the deepest main ancestor-or-self.
    pub fn attach_pos(&self, mut i: usize) -> usize {
        loop {
            if let Some(p) = self.main_pos[i] {
                return p;
            }
            i = self.blocks[i].parent;
        }
    }

    pub fn main_tip(&self) -> BlockId {
        self.blocks[*self.main_chain.last().expect("chain holds genesis")].id
    }
}
