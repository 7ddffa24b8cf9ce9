use super::block::Amount;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TxId(pub u64);

/// Reference to an output of an earlier transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OutPoint {
    pub tx: TxId,
    pub index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub id: TxId,
    pub fee: Amount,
    pub inputs: Vec<OutPoint>,
    pub size_bytes: u64,
}

/// Contiguous slice `[start, start + count)` of the mempool's ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxRange {
    pub start: u64,
    pub count: u64,
}

impl TxRange {
    pub fn end(&self) -> u64 {
        self.start + self.count
    }
}

/// Pool of identical, mutually independent transactions, pre-filled the same
/// way at every node. Transaction `i` spends the artificial output `i` that
/// the initial chain state provides, so two transactions never conflict and a
/// transaction conflicts only with its own earlier inclusion.
///
/// Since every branch serializes the pool in order, the transactions a branch
/// has consumed are exactly `[0, cum_tx)`; a node's mempool is the remainder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mempool {
    total: u64,
    tx_size: u64,
    fee: Amount,
}

impl Mempool {
    pub fn prefilled(total: u64, tx_size: u64, fee: Amount) -> Self {
        assert!(tx_size > 0, "transactions must have a size");
        Mempool {
            total,
            tx_size,
            fee,
        }
    }

    pub fn tx_size(&self) -> u64 {
        self.tx_size
    }

    pub fn fee(&self) -> Amount {
        self.fee
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Transactions still pending on a branch that has serialized `consumed`.
    pub fn pending(&self, consumed: u64) -> u64 {
        self.total.saturating_sub(consumed)
    }

    pub fn transaction(&self, index: u64) -> Option<Transaction> {
        (index < self.total).then(|| Transaction {
            id: TxId(index),
            fee: self.fee,
            inputs: vec![OutPoint {
                tx: TxId(u64::MAX - index),
                index: 0,
            }],
            size_bytes: self.tx_size,
        })
    }

    /// Largest in-order batch fitting in `capacity_bytes` on a branch that has
    /// already serialized `consumed` transactions.
    pub fn fill(&self, consumed: u64, capacity_bytes: u64) -> TxRange {
        let fits = capacity_bytes / self.tx_size;
        TxRange {
            start: consumed,
            count: fits.min(self.pending(consumed)),
        }
    }

    pub fn fees_of(&self, range: TxRange) -> Amount {
        Amount(self.fee.0 * range.count)
    }

    /// Double-spend check: a batch placed after `consumed` transactions must
    /// start exactly there and stay within the pool.
    pub fn validate(&self, consumed: u64, range: TxRange) -> bool {
        range.start == consumed && range.end() <= self.total
    }
}
