use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};
use std::str::FromStr;
use std::sync::Arc;

use sha2::{Digest, Sha256};

/// Identifier of a block, unique within one simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(pub u64);

impl BlockId {
    /// Reserved id of the genesis block.
    pub const GENESIS: BlockId = BlockId(0);

    pub fn is_genesis(self) -> bool {
        self == Self::GENESIS
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A mining node. Node index and miner id coincide in the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MinerId(pub u32);

impl MinerId {
    /// Placeholder miner of the genesis block.
    pub const NONE: MinerId = MinerId(u32::MAX);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for MinerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Self::NONE {
            f.write_str("-")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Which chain protocol a tree or node follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    Bitcoin,
    Ng,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Bitcoin => "bitcoin",
            Protocol::Ng => "ng",
        })
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bitcoin" | "btc" => Ok(Protocol::Bitcoin),
            "ng" | "bitcoin-ng" => Ok(Protocol::Ng),
            other => Err(format!("unknown protocol `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    BitcoinBlock,
    KeyBlock,
    Microblock,
}

impl BlockKind {
    /// Blocks that carry proof of work and therefore chain weight.
    pub fn is_proof_of_work(self) -> bool {
        !matches!(self, BlockKind::Microblock)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::BitcoinBlock => "btc",
            BlockKind::KeyBlock => "key",
            BlockKind::Microblock => "micro",
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BlockKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "btc" => Ok(BlockKind::BitcoinBlock),
            "key" => Ok(BlockKind::KeyBlock),
            "micro" => Ok(BlockKind::Microblock),
            other => Err(format!("unknown block kind `{other}`")),
        }
    }
}

/// Currency amount in indivisible base units (1 coin = 10^8 units).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Amount(pub u64);

impl Amount {
    pub const ZERO: Amount = Amount(0);
    pub const UNITS_PER_COIN: u64 = 100_000_000;

    pub const fn from_coins(coins: u64) -> Self {
        Amount(coins * Self::UNITS_PER_COIN)
    }

    pub fn as_coins(self) -> f64 {
        self.0 as f64 / Self::UNITS_PER_COIN as f64
    }

    pub fn saturating_sub(self, other: Amount) -> Amount {
        Amount(self.0.saturating_sub(other.0))
    }
}

impl Add for Amount {
    type Output = Amount;
    fn add(self, rhs: Amount) -> Amount {
        Amount(self.0 + rhs.0)
    }
}

impl AddAssign for Amount {
    fn add_assign(&mut self, rhs: Amount) {
        self.0 += rhs.0;
    }
}

impl Sub for Amount {
    type Output = Amount;
    fn sub(self, rhs: Amount) -> Amount {
        Amount(self.0 - rhs.0)
    }
}

impl Sum for Amount {
    fn sum<I: Iterator<Item = Amount>>(iter: I) -> Amount {
        iter.fold(Amount::ZERO, Add::add)
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{:08}",
            self.0 / Self::UNITS_PER_COIN,
            self.0 % Self::UNITS_PER_COIN
        )
    }
}

/// A fraction expressed in basis points (1/10000).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Share(u32);

impl Share {
    pub const WHOLE: Share = Share(10_000);

    pub const fn from_basis_points(bp: u32) -> Self {
        assert!(bp <= 10_000);
        Share(bp)
    }

    pub fn basis_points(self) -> u32 {
        self.0
    }

    pub fn complement(self) -> Share {
        Share(10_000 - self.0)
    }

    /// This share of `amount`, rounded down.
    pub fn of(self, amount: Amount) -> Amount {
        Amount((amount.0 as u128 * self.0 as u128 / 10_000) as u64)
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 10_000.0
    }
}

/// Public half of a leader's epoch key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PublicKey(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub u64);

/// Signing stand-in: a signature is a keyed digest of the header that the
/// verifier recomputes from the public key. It models the validity check,
/// not unforgeability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SigningKey {
    secret: u64,
}

fn digest_u64(parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p);
    }
    let out = hasher.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("digest is 32 bytes"))
}

impl SigningKey {
    pub fn from_seed(seed: u64) -> Self {
        SigningKey {
            secret: digest_u64(&[b"ngsim-secret", &seed.to_le_bytes()]),
        }
    }

    pub fn public(&self) -> PublicKey {
        PublicKey(digest_u64(&[b"ngsim-public", &self.secret.to_le_bytes()]))
    }

    pub fn sign(&self, header: &HeaderDigest) -> Signature {
        self.public().expected_signature(header)
    }
}

impl PublicKey {
    fn expected_signature(&self, header: &HeaderDigest) -> Signature {
        Signature(digest_u64(&[
            b"ngsim-sig",
            &self.0.to_le_bytes(),
            &header.0,
        ]))
    }

    pub fn verify(&self, header: &HeaderDigest, sig: Signature) -> bool {
        self.expected_signature(header) == sig
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HeaderDigest(pub [u8; 32]);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayoutKind {
    /// Newly minted coins for the block's miner.
    Subsidy,
    /// Fees of the transactions in a Bitcoin block.
    BlockFees,
    /// Share of an epoch's fees for the leader that serialized them.
    LeaderFees,
    /// Share of the previous epoch's fees for the next leader.
    NextLeaderFees,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payout {
    pub recipient: MinerId,
    pub amount: Amount,
    pub kind: PayoutKind,
    /// Key block opening the epoch whose fees are paid (or the paying block).
    pub epoch: BlockId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Coinbase {
    pub payouts: Vec<Payout>,
}

impl Coinbase {
    pub fn total(&self) -> Amount {
        self.payouts.iter().map(|p| p.amount).sum()
    }

    pub fn paid_to(&self, miner: MinerId) -> Amount {
        self.payouts
            .iter()
            .filter(|p| p.recipient == miner)
            .map(|p| p.amount)
            .sum()
    }
}

/// Fraud proof against a leader that signed two microblocks on one parent.
#[derive(Debug, Clone, PartialEq)]
pub struct PoisonTransaction {
    pub cheater: MinerId,
    /// Header of the first block of the pruned branch.
    pub evidence: Arc<Block>,
    /// Key block that opened the cheater's epoch.
    pub cheater_epoch: BlockId,
    /// Key block the poison must follow (the one after the cheater's epoch).
    pub placed_after: BlockId,
    pub poisoner_share: Share,
}

/// One block of either protocol. Transactions are not materialized: a block
/// carries the contiguous range `[tx_start, tx_start + tx_count)` of the
/// pre-filled mempool it serializes.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub id: BlockId,
    pub parent: BlockId,
    pub kind: BlockKind,
    pub miner: MinerId,
    /// Header timestamp in simulated seconds (creator's clock).
    pub created_at: f64,
    pub size_bytes: u64,
    pub tx_start: u64,
    pub tx_count: u64,
    /// Sum of the fees of the serialized transactions.
    pub fees: Amount,
    /// Digest of the ledger entries; differs between equivocating siblings.
    pub payload_tag: u64,
    pub leader_key: Option<PublicKey>,
    pub signature: Option<Signature>,
    pub coinbase: Option<Coinbase>,
    pub poisons: Vec<PoisonTransaction>,
}

impl Block {
    pub fn genesis(protocol: Protocol) -> Block {
        Block {
            id: BlockId::GENESIS,
            parent: BlockId::GENESIS,
            kind: match protocol {
                Protocol::Bitcoin => BlockKind::BitcoinBlock,
                Protocol::Ng => BlockKind::KeyBlock,
            },
            miner: MinerId::NONE,
            created_at: 0.0,
            size_bytes: 0,
            tx_start: 0,
            tx_count: 0,
            fees: Amount::ZERO,
            payload_tag: 0,
            leader_key: None,
            signature: None,
            coinbase: None,
            poisons: Vec::new(),
        }
    }

    /// A bare block of `kind` with everything optional left empty.
    pub fn new(
        id: BlockId,
        parent: BlockId,
        kind: BlockKind,
        miner: MinerId,
        created_at: f64,
    ) -> Block {
        Block {
            id,
            parent,
            kind,
            miner,
            created_at,
            ..Block::genesis(Protocol::Bitcoin)
        }
    }

    pub fn is_genesis(&self) -> bool {
        self.id.is_genesis()
    }

    /// Digest over every header field except the signature itself.
    pub fn header_digest(&self) -> HeaderDigest {
        let mut h = Sha256::new();
        h.update(self.id.0.to_le_bytes());
        h.update(self.parent.0.to_le_bytes());
        h.update([self.kind as u8]);
        h.update(self.miner.0.to_le_bytes());
        h.update(self.created_at.to_bits().to_le_bytes());
        h.update(self.size_bytes.to_le_bytes());
        h.update(self.tx_start.to_le_bytes());
        h.update(self.tx_count.to_le_bytes());
        h.update(self.fees.0.to_le_bytes());
        h.update(self.payload_tag.to_le_bytes());
        if let Some(k) = self.leader_key {
            h.update(k.0.to_le_bytes());
        }
        for p in &self.poisons {
            h.update(p.cheater.0.to_le_bytes());
            h.update(p.evidence.id.0.to_le_bytes());
        }
        HeaderDigest(h.finalize().into())
    }
}
