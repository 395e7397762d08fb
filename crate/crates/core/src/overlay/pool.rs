//! Pending dual-signed transactions, in arrival order, unique by id.

use indexmap::IndexMap;

use crate::crypto::Hash256;
use crate::ledger::ChainTx;
use crate::time::SimTime;

#[derive(Clone, Debug)]
pub struct PoolEntry {
    pub tx: ChainTx,
    pub entered: SimTime,
}

#[derive(Clone, Debug, Default)]
pub struct TransactionPool {
    entries: IndexMap<Hash256, PoolEntry>,
}

impl TransactionPool {
    /// Returns false for a duplicate.
    pub fn insert(&mut self, tx: ChainTx, now: SimTime) -> bool {
        let id = tx.tx_id();
        if self.entries.contains_key(&id) {
            return false;
        }
        self.entries.insert(id, PoolEntry { tx, entered: now });
        true
    }

    pub fn contains(&self, id: &Hash256) -> bool {
        self.entries.contains_key(id)
    }

    pub fn get(&self, id: &Hash256) -> Option<&PoolEntry> {
        self.entries.get(id)
    }

    pub fn remove(&mut self, id: &Hash256) -> Option<PoolEntry> {
        self.entries.shift_remove(id)
    }

    /// Oldest `n` transactions, left in place.
    pub fn front(&self, n: usize) -> Vec<ChainTx> {
        self.entries.values().take(n).map(|e| e.tx.clone()).collect()
    }

    /// Entries in arrival order.
    pub fn iter(&self) -> impl Iterator<Item = &PoolEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn retain(&mut self, mut keep: impl FnMut(&Hash256) -> bool) {
        self.entries.retain(|id, _| keep(id));
    }
}
