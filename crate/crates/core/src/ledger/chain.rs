use crate::crypto::Hash256;
use crate::error::ChainError;
use crate::ledger::block::Block;
use crate::ledger::tx::{ChainTx, LedgerKind};
use crate::ledger::verify::{ChainView, TxIndex};

/// Append-only block sequence with a per-requester commitment index.
#[derive(Clone, Debug, Default)]
pub struct PublicChain {
    blocks: Vec<Block>,
    hashes: Vec<Hash256>,
    index: TxIndex,
}

impl PublicChain {
    pub fn new() -> Self {
        PublicChain::default()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn tip_hash(&self) -> Hash256 {
        self.hashes.last().copied().unwrap_or(Hash256::ZERO)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block_hash(&self, height: usize) -> Option<Hash256> {
        self.hashes.get(height).copied()
    }

    pub fn contains_tx(&self, id: &Hash256) -> bool {
        self.index.contains(id)
    }

    pub fn tx_count(&self) -> usize {
        self.index.len()
    }

    /// Link `block` onto the tip. The chain is untouched on error.
    pub fn append_block(&mut self, block: Block) -> Result<Hash256, ChainError> {
        let tip = self.tip_hash();
        if block.header.prev_block_hash != tip {
            return Err(ChainError::PrevHashMismatch {
                height: self.blocks.len(),
                expected: tip,
                got: block.header.prev_block_hash,
            });
        }
        if block.txs.is_empty() {
            return Err(ChainError::BadBlockSize(0));
        }
        let mut seen = std::collections::HashSet::new();
        for tx in &block.txs {
            let id = tx.tx_id();
            if self.index.contains(&id) || !seen.insert(id) {
                return Err(ChainError::DuplicateTx(id));
            }
        }
        for tx in &block.txs {
            self.index.insert(tx.clone());
        }
        let h = block.hash();
        self.blocks.push(block);
        self.hashes.push(h);
        Ok(h)
    }

    /// Drop blocks above height `len`, returning them oldest first.
    pub fn truncate(&mut self, len: usize) -> Vec<Block> {
        let mut out = Vec::new();
        while self.blocks.len() > len {
            let b = self.blocks.pop().expect("len checked");
            self.hashes.pop();
            for tx in b.txs.iter().rev() {
                self.index.remove_last(&tx.tx_id());
            }
            out.push(b);
        }
        out.reverse();
        out
    }

    /// Recompute every block hash and check each link. Returns the height of
    /// the first block whose predecessor no longer matches; a tampered tip is
    /// reported as `len()`.
    pub fn validate_links(&self) -> Result<(), usize> {
        let mut expected_prev = Hash256::ZERO;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.header.prev_block_hash != expected_prev {
                return Err(i);
            }
            expected_prev = b.hash();
        }
        if expected_prev != self.tip_hash() {
            return Err(self.blocks.len());
        }
        Ok(())
    }

    /// Direct access for tamper experiments; bypasses all invariants.
    pub fn blocks_mut(&mut self) -> &mut [Block] {
        &mut self.blocks
    }

    pub fn ledger_head(&self, ledger: LedgerKind, next_pk_hash: &Hash256) -> Option<&ChainTx> {
        self.index.open_commitment(ledger, next_pk_hash).and_then(|id| self.index.tx(&id))
    }
}

impl ChainView for PublicChain {
    fn tx(&self, id: &Hash256) -> Option<&ChainTx> {
        self.index.tx(id)
    }

    fn open_commitment(&self, ledger: LedgerKind, next_pk_hash: &Hash256) -> Option<Hash256> {
        self.index.open_commitment(ledger, next_pk_hash)
    }
}
