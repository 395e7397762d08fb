//! Block tree with fork choice; the main branch is materialized as a `PublicChain`.
//!
//! Fork choice: greatest height, then lowest block hash. Every replica that has
//! seen the same blocks therefore selects the same branch.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap, HashSet};

use crate::crypto::{Hash256, Signature};
use crate::ids::ObmId;
use crate::ledger::{Block, ChainTx, PublicChain};

#[derive(Clone, Debug)]
struct Node {
    block: Block,
    height: usize,
}

#[derive(Clone, Debug, Default)]
pub struct InsertOutcome {
    /// Transactions that left the main branch.
    pub removed: Vec<ChainTx>,
    /// Transactions that joined the main branch.
    pub added: Vec<ChainTx>,
    pub main_changed: bool,
}

#[derive(Clone, Debug, Default)]
pub struct ChainReplica {
    nodes: HashMap<Hash256, Node>,
    main: PublicChain,
    orphans: BTreeMap<Hash256, Vec<Block>>,
}

impl ChainReplica {
    pub fn new() -> Self {
        ChainReplica::default()
    }

    pub fn main(&self) -> &PublicChain {
        &self.main
    }

    pub fn tip_hash(&self) -> Hash256 {
        self.main.tip_hash()
    }

    pub fn height(&self) -> usize {
        self.main.len()
    }

    pub fn contains(&self, h: &Hash256) -> bool {
        self.nodes.contains_key(h)
    }

    pub fn knows_parent(&self, b: &Block) -> bool {
        b.header.prev_block_hash == Hash256::ZERO || self.nodes.contains_key(&b.header.prev_block_hash)
    }

    /// Blocks from the last one shared with `chain` up to `tip`, with the
    /// height they start above.
    fn fork_suffix(&self, chain: &PublicChain, tip: Hash256) -> (usize, Vec<Hash256>) {
        let mut path = Vec::new();
        let mut cur = tip;
        while cur != Hash256::ZERO {
            let height = self.nodes[&cur].height;
            if chain.block_hash(height - 1) == Some(cur) {
                path.reverse();
                return (height, path);
            }
            path.push(cur);
            cur = self.nodes[&cur].block.header.prev_block_hash;
        }
        path.reverse();
        (0, path)
    }

    /// Rewind `chain` (a copy of the main branch) to the fork point and replay
    /// the branch ending at `tip`. Returns the fork height and the blocks rewound.
    fn switch_to(&self, chain: &mut PublicChain, tip: Hash256) -> (usize, Vec<Block>) {
        let (base, path) = self.fork_suffix(chain, tip);
        let removed = chain.truncate(base);
        for h in path {
            chain.append_block(self.nodes[&h].block.clone()).expect("tree branches link");
        }
        (base, removed)
    }

    fn materialize(&self, tip: Hash256) -> PublicChain {
        let mut c = self.main.clone();
        self.switch_to(&mut c, tip);
        c
    }

    /// The chain a block with parent `parent` must be verified against.
    pub fn view_for_parent(&self, parent: &Hash256) -> Cow<'_, PublicChain> {
        if *parent == self.main.tip_hash() {
            Cow::Borrowed(&self.main)
        } else {
            Cow::Owned(self.materialize(*parent))
        }
    }

    fn better(&self, a: Hash256, b: Hash256) -> bool {
        let ha = self.nodes.get(&a).map(|n| n.height).unwrap_or(0);
        let hb = self.nodes.get(&b).map(|n| n.height).unwrap_or(0);
        ha > hb || (ha == hb && a < b)
    }

    /// Add a verified block whose parent is known, switching branches if it wins.
    pub fn insert(&mut self, block: Block) -> InsertOutcome {
        let h = block.hash();
        if self.nodes.contains_key(&h) {
            return InsertOutcome::default();
        }
        let parent = block.header.prev_block_hash;
        let height = if parent == Hash256::ZERO { 1 } else { self.nodes[&parent].height + 1 };
        let old_tip = self.main.tip_hash();
        self.nodes.insert(h, Node { block: block.clone(), height });
        if old_tip != Hash256::ZERO && !self.better(h, old_tip) {
            return InsertOutcome::default();
        }
        if parent == old_tip {
            self.main.append_block(block.clone()).expect("extends tip");
            return InsertOutcome { removed: Vec::new(), added: block.txs, main_changed: true };
        }
        let mut main = std::mem::take(&mut self.main);
        let (fork, rewound) = self.switch_to(&mut main, h);
        self.main = main;
        let old_ids: HashSet<Hash256> = rewound.iter().flat_map(|b| b.txs.iter().map(|t| t.tx_id())).collect();
        let new_blocks = &self.main.blocks()[fork..];
        let new_ids: HashSet<Hash256> = new_blocks.iter().flat_map(|b| b.txs.iter().map(|t| t.tx_id())).collect();
        let removed = rewound.iter().flat_map(|b| b.txs.iter()).filter(|t| !new_ids.contains(&t.tx_id())).cloned().collect();
        let added = new_blocks.iter().flat_map(|b| b.txs.iter()).filter(|t| !old_ids.contains(&t.tx_id())).cloned().collect();
        InsertOutcome { removed, added, main_changed: true }
    }

    pub fn add_orphan(&mut self, block: Block) {
        self.orphans.entry(block.header.prev_block_hash).or_default().push(block);
    }

    pub fn take_orphans(&mut self, parent: &Hash256) -> Vec<Block> {
        self.orphans.remove(parent).unwrap_or_default()
    }

    pub fn orphan_count(&self) -> usize {
        self.orphans.values().map(|v| v.len()).sum()
    }

    /// Attach a verifier signature to a stored block.
    pub fn add_verifier_sig(&mut self, block_hash: &Hash256, id: ObmId, sig: Signature) -> bool {
        let Some(node) = self.nodes.get_mut(block_hash) else {
            return false;
        };
        node.block.add_verifier_sig(id, sig);
        let height = node.height;
        if self.main.block_hash(height - 1) == Some(*block_hash) {
            self.main.blocks_mut()[height - 1].add_verifier_sig(id, sig);
        }
        true
    }

    /// Copy of the stored block.
    pub fn block(&self, h: &Hash256) -> Option<&Block> {
        self.nodes.get(h).map(|n| &n.block)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keygen;
    use crate::ids::NodeId;
    use crate::ledger::{GenesisTransaction, LedgerKind};
    use crate::rng::stream;

    fn genesis_tx(i: u64) -> ChainTx {
        let mut r = stream(i, "g", 0);
        let root = keygen(&mut r);
        let a = keygen(&mut r);
        let b = keygen(&mut r);
        ChainTx::Genesis(GenesisTransaction::certified(LedgerKind::Multisig, &a, &b.public(), &root))
    }

    #[test]
    fn fork_choice_prefers_height_then_lowest_hash() {
        let key = keygen(&mut stream(0, "k", 0));
        let b0 = Block::new(Hash256::ZERO, NodeId(0), vec![genesis_tx(1)], &key);
        let h0 = b0.hash();
        let x = Block::new(h0, NodeId(1), vec![genesis_tx(2)], &key);
        let y = Block::new(h0, NodeId(2), vec![genesis_tx(3)], &key);
        let (lo, hi) = if x.hash() < y.hash() { (x, y) } else { (y, x) };

        let mut a = ChainReplica::new();
        a.insert(b0.clone());
        a.insert(hi.clone());
        let out = a.insert(lo.clone());
        assert!(out.main_changed);
        assert_eq!(out.removed.len(), 1);
        assert_eq!(a.tip_hash(), lo.hash());

        let mut b = ChainReplica::new();
        b.insert(b0);
        b.insert(lo.clone());
        assert!(!b.insert(hi.clone()).main_changed);
        assert_eq!(b.tip_hash(), a.tip_hash());

        let z = Block::new(hi.hash(), NodeId(3), vec![genesis_tx(4)], &key);
        b.insert(z.clone());
        assert_eq!(b.tip_hash(), z.hash());
        assert_eq!(b.height(), 3);
    }
}
