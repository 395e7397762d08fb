//! Transaction verification against a view of the public chain.

use std::collections::HashMap;

use thiserror::Error;

use crate::crypto::{verify, Hash256};
use crate::ledger::genesis::{verify_genesis, MockBurnLedger, TrustRoots};
use crate::ledger::tx::{ChainTx, LedgerKind, MultisigTransaction, SingleSigTransaction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum TxRejection {
    #[error("stored id does not match contents")]
    TxIdMismatch,
    #[error("previous transaction not found")]
    Unchained,
    #[error("previous transaction belongs to the other ledger")]
    WrongLedger,
    #[error("requester key does not match the committed hash")]
    PkHashMismatch,
    #[error("commitment already consumed by another transaction")]
    CommitmentSpent,
    #[error("requester signature invalid")]
    BadRequesterSig,
    #[error("output counters must change by exactly one")]
    BadOutputDelta,
    #[error("requestee signature missing")]
    MissingRequesteeSig,
    #[error("requestee signature invalid")]
    BadRequesteeSig,
    #[error("genesis proof invalid")]
    BadGenesis,
}

/// Read access to committed transactions.
pub trait ChainView {
    fn tx(&self, id: &Hash256) -> Option<&ChainTx>;
    /// The transaction currently holding commitment `next_pk_hash` in `ledger`, if unspent.
    fn open_commitment(&self, ledger: LedgerKind, next_pk_hash: &Hash256) -> Option<Hash256>;
}

fn locate<'a, V: ChainView + ?Sized>(
    view: &'a V,
    ledger: LedgerKind,
    prev_tx_id: &Hash256,
    pk_hash: Hash256,
) -> Result<&'a ChainTx, TxRejection> {
    let prev = view.tx(prev_tx_id).ok_or(TxRejection::Unchained)?;
    if prev.ledger() != ledger {
        return Err(TxRejection::WrongLedger);
    }
    if pk_hash != prev.next_pk_hash() {
        return Err(TxRejection::PkHashMismatch);
    }
    if view.open_commitment(ledger, &prev.next_pk_hash()) != Some(*prev_tx_id) {
        return Err(TxRejection::CommitmentSpent);
    }
    Ok(prev)
}

/// Full multisig transaction check, returning the first failing step.
pub fn check_multisig<V: ChainView + ?Sized>(x: &MultisigTransaction, view: &V) -> Result<(), TxRejection> {
    if x.tx_id != x.compute_id() {
        return Err(TxRejection::TxIdMismatch);
    }
    let prev = locate(view, LedgerKind::Multisig, &x.prev_tx_id, x.requester_pk.hash())?;
    if !verify(&x.requester_pk, &x.requester_body(), &x.requester_sig) {
        return Err(TxRejection::BadRequesterSig);
    }
    let (a0, r0) = prev.counters();
    let (a1, r1) = (x.output.accepted, x.output.rejected);
    let one_step = (a1 == a0.wrapping_add(1) && r1 == r0) || (a1 == a0 && r1 == r0.wrapping_add(1));
    if !one_step || a1 < a0 || r1 < r0 {
        return Err(TxRejection::BadOutputDelta);
    }
    let sig = x.requestee_sig.as_ref().ok_or(TxRejection::MissingRequesteeSig)?;
    if !verify(&x.requestee_pk, &x.requestee_body(), sig) {
        return Err(TxRejection::BadRequesteeSig);
    }
    Ok(())
}

pub fn check_single_sig<V: ChainView + ?Sized>(x: &SingleSigTransaction, view: &V) -> Result<(), TxRejection> {
    if x.tx_id != x.compute_id() {
        return Err(TxRejection::TxIdMismatch);
    }
    locate(view, LedgerKind::SingleSig, &x.prev_tx_id, x.requester_pk.hash())?;
    if !verify(&x.requester_pk, &x.signed_body(), &x.requester_sig) {
        return Err(TxRejection::BadRequesterSig);
    }
    Ok(())
}

/// Checks applied to a transaction sampled from a block.
pub struct VerifyContext<'a> {
    pub roots: &'a TrustRoots,
    pub burns: &'a MockBurnLedger,
}

pub fn check_chain_tx<V: ChainView + ?Sized>(tx: &ChainTx, view: &V, ctx: &VerifyContext) -> Result<(), TxRejection> {
    match tx {
        ChainTx::Genesis(g) => {
            if verify_genesis(g, ctx.roots, ctx.burns) {
                Ok(())
            } else {
                Err(TxRejection::BadGenesis)
            }
        }
        ChainTx::Multisig(x) => check_multisig(x, view),
        ChainTx::SingleSig(x) => check_single_sig(x, view),
    }
}

pub fn check_transaction<V: ChainView + ?Sized>(x: &MultisigTransaction, view: &V) -> Result<(), TxRejection> {
    check_multisig(x, view)
}

pub fn verify_transaction<V: ChainView + ?Sized>(x: &MultisigTransaction, view: &V) -> bool {
    check_multisig(x, view).is_ok()
}

/// A chain view plus transactions staged on top of it, e.g. earlier entries of
/// the block under verification.
pub struct StagedView<'a, V: ChainView + ?Sized> {
    base: &'a V,
    added: HashMap<Hash256, ChainTx>,
    heads: HashMap<(LedgerKind, Hash256), Option<Hash256>>,
}

impl<'a, V: ChainView + ?Sized> StagedView<'a, V> {
    pub fn new(base: &'a V) -> Self {
        StagedView { base, added: HashMap::new(), heads: HashMap::new() }
    }

    pub fn stage(&mut self, tx: &ChainTx) {
        let ledger = tx.ledger();
        if let Some(prev) = tx.prev_tx_id() {
            if let Some(p) = self.tx(&prev) {
                let committed = p.next_pk_hash();
                self.heads.insert((ledger, committed), None);
            }
        }
        self.heads.insert((ledger, tx.next_pk_hash()), Some(tx.tx_id()));
        self.added.insert(tx.tx_id(), tx.clone());
    }
}

impl<V: ChainView + ?Sized> ChainView for StagedView<'_, V> {
    fn tx(&self, id: &Hash256) -> Option<&ChainTx> {
        self.added.get(id).or_else(|| self.base.tx(id))
    }

    fn open_commitment(&self, ledger: LedgerKind, next_pk_hash: &Hash256) -> Option<Hash256> {
        match self.heads.get(&(ledger, *next_pk_hash)) {
            Some(h) => *h,
            None => self.base.open_commitment(ledger, next_pk_hash),
        }
    }
}

/// In-memory index usable as a standalone view in tests and tools.
#[derive(Default, Clone, Debug)]
pub struct TxIndex {
    txs: HashMap<Hash256, ChainTx>,
    heads: HashMap<(LedgerKind, Hash256), Hash256>,
}

impl TxIndex {
    pub fn insert(&mut self, tx: ChainTx) {
        let ledger = tx.ledger();
        if let Some(prev) = tx.prev_tx_id() {
            if let Some(p) = self.txs.get(&prev) {
                let committed = p.next_pk_hash();
                if self.heads.get(&(ledger, committed)) == Some(&prev) {
                    self.heads.remove(&(ledger, committed));
                }
            }
        }
        self.heads.insert((ledger, tx.next_pk_hash()), tx.tx_id());
        self.txs.insert(tx.tx_id(), tx);
    }

    /// Undo the most recent `insert` of `id`. Only exact in reverse insertion order.
    pub fn remove_last(&mut self, id: &Hash256) -> Option<ChainTx> {
        let tx = self.txs.remove(id)?;
        let ledger = tx.ledger();
        let key = (ledger, tx.next_pk_hash());
        if self.heads.get(&key) == Some(id) {
            self.heads.remove(&key);
        }
        if let Some(prev) = tx.prev_tx_id() {
            if let Some(p) = self.txs.get(&prev) {
                self.heads.entry((ledger, p.next_pk_hash())).or_insert(prev);
            }
        }
        Some(tx)
    }

    pub fn contains(&self, id: &Hash256) -> bool {
        self.txs.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.txs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txs.is_empty()
    }
}

impl ChainView for TxIndex {
    fn tx(&self, id: &Hash256) -> Option<&ChainTx> {
        self.txs.get(id)
    }

    fn open_commitment(&self, ledger: LedgerKind, next_pk_hash: &Hash256) -> Option<Hash256> {
        self.heads.get(&(ledger, *next_pk_hash)).copied()
    }
}
