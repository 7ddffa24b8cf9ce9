use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::Rng;

use super::block::{Amount, Block, BlockId, BlockKind, Protocol};
use super::ChainError;

/// Accumulated proof of work on the path from genesis: the number of
/// Bitcoin blocks or key blocks. Microblocks contribute nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChainWeight(pub u64);

/// How a node breaks ties between equally heavy branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Uniformly random among the tied branches.
    #[default]
    Random,
    /// Keep whatever branch was seen first.
    FirstSeen,
}

impl std::str::FromStr for TieBreak {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(TieBreak::Random),
            "first_seen" | "first-seen" => Ok(TieBreak::FirstSeen),
            other => Err(format!("unknown tie-break rule `{other}`")),
        }
    }
}

impl std::fmt::Display for TieBreak {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TieBreak::Random => "random",
            TieBreak::FirstSeen => "first_seen",
        })
    }
}

/// Per-block bookkeeping derived at insertion time.
#[derive(Debug, Clone)]
pub struct TreeEntry {
    pub block: Arc<Block>,
    /// Number of blocks on the path, genesis excluded.
    pub height: u64,
    pub weight: ChainWeight,
    /// Nearest proof-of-work ancestor-or-self (the epoch's key block in NG).
    pub epoch: BlockId,
    /// Transactions serialized on the path, genesis to this block inclusive.
    pub cum_tx: u64,
    /// Fees of the serialized transactions on the path.
    pub cum_fees: Amount,
}

/// Append-only tree of blocks rooted at genesis.
#[derive(Debug, Clone)]
pub struct BlockTree {
    protocol: Protocol,
    entries: HashMap<BlockId, TreeEntry>,
    children: HashMap<BlockId, Vec<BlockId>>,
    leaves: BTreeSet<BlockId>,
    /// Proof-of-work block count per weight; each one heads a tie group.
    pow_at_weight: BTreeMap<u64, u32>,
}

impl BlockTree {
    /// An empty tree; the first insertion must be the genesis block.
    pub fn new(protocol: Protocol) -> Self {
        BlockTree {
            protocol,
            entries: HashMap::new(),
            children: HashMap::new(),
            leaves: BTreeSet::new(),
            pow_at_weight: BTreeMap::new(),
        }
    }

    pub fn with_genesis(protocol: Protocol) -> Self {
        let mut tree = Self::new(protocol);
        tree.insert(Arc::new(Block::genesis(protocol)))
            .expect("empty tree accepts genesis");
        tree
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn genesis(&self) -> BlockId {
        BlockId::GENESIS
    }

    pub fn contains(&self, id: BlockId) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn get(&self, id: BlockId) -> Option<&TreeEntry> {
        self.entries.get(&id)
    }

    fn entry(&self, id: BlockId) -> Result<&TreeEntry, ChainError> {
        self.entries.get(&id).ok_or(ChainError::UnknownBlock(id))
    }

    pub fn block(&self, id: BlockId) -> Option<&Arc<Block>> {
        self.entries.get(&id).map(|e| &e.block)
    }

    pub fn children(&self, id: BlockId) -> &[BlockId] {
        self.children.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Leaves in ascending id order.
    pub fn leaves(&self) -> impl Iterator<Item = BlockId> + '_ {
        self.leaves.iter().copied()
    }

    /// Number of proof-of-work blocks at exactly `weight`.
    pub fn pow_blocks_at(&self, weight: ChainWeight) -> u32 {
        self.pow_at_weight.get(&weight.0).copied().unwrap_or(0)
    }

    pub fn insert(&mut self, block: Arc<Block>) -> Result<&TreeEntry, ChainError> {
        let id = block.id;
        if self.entries.contains_key(&id) {
            return Err(ChainError::DuplicateBlock(id));
        }
        let entry = if self.entries.is_empty() {
            if !block.is_genesis() {
                return Err(ChainError::UnknownParent {
                    block: id,
                    parent: block.parent,
                });
            }
            TreeEntry {
                block,
                height: 0,
                weight: ChainWeight(0),
                epoch: id,
                cum_tx: 0,
                cum_fees: Amount::ZERO,
            }
        } else {
            let parent = self
                .entries
                .get(&block.parent)
                .ok_or(ChainError::UnknownParent {
                    block: id,
                    parent: block.parent,
                })?;
            let pow = block.kind.is_proof_of_work();
            TreeEntry {
                height: parent.height + 1,
                weight: ChainWeight(parent.weight.0 + u64::from(pow)),
                epoch: if pow { id } else { parent.epoch },
                cum_tx: parent.cum_tx + block.tx_count,
                cum_fees: parent.cum_fees + block.fees,
                block,
            }
        };
        if !entry.block.is_genesis() {
            let parent = entry.block.parent;
            self.leaves.remove(&parent);
            self.children.entry(parent).or_default().push(id);
            if entry.block.kind.is_proof_of_work() {
                *self.pow_at_weight.entry(entry.weight.0).or_default() += 1;
            }
        }
        self.leaves.insert(id);
        Ok(self.entries.entry(id).or_insert(entry))
    }

    /// Walks from `id` (inclusive) up to genesis (inclusive).
    pub fn ancestors(&self, id: BlockId) -> Ancestors<'_> {
        Ancestors {
            tree: self,
            next: self.entries.contains_key(&id).then_some(id),
        }
    }

    /// Block ids from genesis to `id`, both inclusive.
    pub fn path(&self, id: BlockId) -> Result<Vec<BlockId>, ChainError> {
        self.entry(id)?;
        let mut path: Vec<BlockId> = self.ancestors(id).map(|e| e.block.id).collect();
        path.reverse();
        Ok(path)
    }

    /// Ancestor of `id` at `height` (or `id` itself).
    pub fn ancestor_at(&self, id: BlockId, height: u64) -> Option<BlockId> {
        let mut cur = self.entries.get(&id)?;
        if cur.height < height {
            return None;
        }
        while cur.height > height {
            cur = &self.entries[&cur.block.parent];
        }
        Some(cur.block.id)
    }

    /// True when `ancestor` lies on the path from genesis to `id` (inclusive).
    pub fn is_ancestor(&self, ancestor: BlockId, id: BlockId) -> bool {
        match self.entries.get(&ancestor) {
            Some(a) => self.ancestor_at(id, a.height) == Some(ancestor),
            None => false,
        }
    }

    /// Deepest common ancestor of two blocks.
    pub fn fork_point(&self, a: BlockId, b: BlockId) -> Result<BlockId, ChainError> {
        let (mut ea, mut eb) = (self.entry(a)?, self.entry(b)?);
        while ea.height > eb.height {
            ea = &self.entries[&ea.block.parent];
        }
        while eb.height > ea.height {
            eb = &self.entries[&eb.block.parent];
        }
        while ea.block.id != eb.block.id {
            ea = &self.entries[&ea.block.parent];
            eb = &self.entries[&eb.block.parent];
        }
        Ok(ea.block.id)
    }
}

pub struct Ancestors<'a> {
    tree: &'a BlockTree,
    next: Option<BlockId>,
}

impl<'a> Iterator for Ancestors<'a> {
    type Item = &'a TreeEntry;

    fn next(&mut self) -> Option<&'a TreeEntry> {
        let id = self.next?;
        let e = &self.tree.entries[&id];
        self.next = (!e.block.is_genesis()).then_some(e.block.parent);
        Some(e)
    }
}

/// Weight of the chain ending at `leaf` under `protocol`'s rule: every block
/// counts in Bitcoin, only key blocks count in Bitcoin-NG.
pub fn chain_weight(
    tree: &BlockTree,
    leaf: BlockId,
    protocol: Protocol,
) -> Result<ChainWeight, ChainError> {
    let e = tree.entry(leaf)?;
    Ok(match protocol {
        Protocol::Bitcoin => ChainWeight(e.height),
        Protocol::Ng => e.weight,
    })
}

/// Deepest block shared by the paths to all `leaves`.
pub fn common_prefix(tree: &BlockTree, leaves: &[BlockId]) -> Result<BlockId, ChainError> {
    let (first, rest) = leaves.split_first().ok_or(ChainError::EmptySelection)?;
    tree.entry(*first)?;
    rest.iter()
        .try_fold(*first, |acc, &l| tree.fork_point(acc, l))
}

/// Groups of maximal weight, keyed by the proof-of-work block heading each,
/// with the preferred (longest, then first-inserted) leaf of each group.
fn heaviest_groups(tree: &BlockTree) -> Vec<(BlockId, BlockId)> {
    let mut best = ChainWeight(0);
    let mut groups: BTreeMap<BlockId, BlockId> = BTreeMap::new();
    for leaf in tree.leaves() {
        let e = &tree.entries[&leaf];
        if e.weight > best {
            best = e.weight;
            groups.clear();
        }
        if e.weight == best {
            match groups.get(&e.epoch) {
                Some(cur) if tree.entries[cur].height >= e.height => {}
                _ => {
                    groups.insert(e.epoch, leaf);
                }
            }
        }
    }
    groups.into_iter().collect()
}

/// Leaf of the heaviest chain. Ties between distinct branches are broken
/// uniformly at random; within one Bitcoin-NG epoch the longest microblock
/// suffix wins.
pub fn select_main_chain<R: Rng + ?Sized>(tree: &BlockTree, rng: &mut R) -> BlockId {
    let groups = heaviest_groups(tree);
    match groups.len() {
        0 => tree.genesis(),
        1 => groups[0].1,
        n => groups[rng.random_range(0..n)].1,
    }
}

/// All leaves a correct selection may return (used by invariant checks).
pub fn heaviest_candidates(tree: &BlockTree) -> Vec<BlockId> {
    heaviest_groups(tree)
        .into_iter()
        .map(|(_, leaf)| leaf)
        .collect()
}

/// Incremental fork choice: should a node whose tip is `current` move to the
/// freshly inserted leaf `candidate`?
///
/// Random tie-breaking switches to a new, equally heavy group with
/// probability 1/k, k being the number of such groups, so the choice stays
/// uniform as groups arrive one by one.
pub fn prefer_candidate<R: Rng + ?Sized>(
    tree: &BlockTree,
    current: BlockId,
    candidate: BlockId,
    tie_break: TieBreak,
    rng: &mut R,
) -> bool {
    let (cur, cand) = match (tree.get(current), tree.get(candidate)) {
        (Some(c), Some(d)) => (c, d),
        _ => return false,
    };
    if cand.weight != cur.weight {
        return cand.weight > cur.weight;
    }
    if cand.epoch == cur.epoch {
        return cand.height > cur.height;
    }
    if cand.epoch != candidate || cand.block.kind == BlockKind::Microblock {
        // A non-selected, equally heavy group growing its suffix.
        return false;
    }
    match tie_break {
        TieBreak::FirstSeen => false,
        TieBreak::Random => {
            let k = tree.pow_blocks_at(cand.weight).max(1);
            rng.random_range(0..k) == 0
        }
    }
}
