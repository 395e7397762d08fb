//! Genesis records: the first link of every requester chain.
//!
//! A genesis is ratified either by a certificate from a configured root key or
//! by a reference into a burn ledger. Both are mocked: roots are a key list and
//! the burn ledger is a plain address map.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::codec::{Dec, Enc};
use crate::crypto::{hash, verify, Hash256, KeyPair, PublicKey, Signature};
use crate::error::CodecError;
use crate::ledger::tx::{LedgerKind, TransactionOutput};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GenesisProof {
    /// `sig` is the root's signature over the certificate body for `pk`.
    Certificate { root: PublicKey, sig: Signature },
    /// Address of a burn entry that records `pk`.
    Burn { burn_ref: Hash256 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenesisTransaction {
    pub tx_id: Hash256,
    pub ledger: LedgerKind,
    pub pk: PublicKey,
    pub output: TransactionOutput,
    pub proof: GenesisProof,
    pub sig: Signature,
}

pub fn certificate_body(pk: &PublicKey) -> Vec<u8> {
    let mut e = Enc::tagged(b"lsb/genesis/cert");
    e.pk(pk);
    e.finish()
}

impl GenesisTransaction {
    fn encode_proof(&self, e: &mut Enc) {
        match &self.proof {
            GenesisProof::Certificate { root, sig } => {
                e.u8(0).pk(root).sig(sig);
            }
            GenesisProof::Burn { burn_ref } => {
                e.u8(1).hash(burn_ref);
            }
        }
    }

    pub fn signed_body(&self) -> Vec<u8> {
        let mut e = Enc::tagged(b"lsb/genesis/body");
        e.u8(self.ledger.tag())
            .pk(&self.pk)
            .u64(self.output.accepted)
            .u64(self.output.rejected)
            .hash(&self.output.next_pk_hash);
        self.encode_proof(&mut e);
        e.finish()
    }

    fn encode_fields(&self, e: &mut Enc) {
        e.u8(self.ledger.tag())
            .pk(&self.pk)
            .u64(self.output.accepted)
            .u64(self.output.rejected)
            .hash(&self.output.next_pk_hash);
        self.encode_proof(e);
        e.sig(&self.sig);
    }

    pub fn compute_id(&self) -> Hash256 {
        let mut e = Enc::tagged(b"lsb/genesis/id");
        self.encode_fields(&mut e);
        hash(e.as_slice())
    }

    pub fn encode(&self, e: &mut Enc) {
        e.hash(&self.tx_id);
        self.encode_fields(e);
    }

    pub fn decode(d: &mut Dec) -> Result<Self, CodecError> {
        let tx_id = d.hash()?;
        let ledger = match d.u8()? {
            0 => LedgerKind::Multisig,
            1 => LedgerKind::SingleSig,
            t => return Err(CodecError::Tag(t)),
        };
        let pk = d.pk()?;
        let output = TransactionOutput { accepted: d.u64()?, rejected: d.u64()?, next_pk_hash: d.hash()? };
        let proof = match d.u8()? {
            0 => GenesisProof::Certificate { root: d.pk()?, sig: d.sig()? },
            1 => GenesisProof::Burn { burn_ref: d.hash()? },
            t => return Err(CodecError::Tag(t)),
        };
        let sig = d.sig()?;
        Ok(GenesisTransaction { tx_id, ledger, pk, output, proof, sig })
    }

    fn finish(mut self, owner: &KeyPair) -> Self {
        self.sig = owner.sign(&self.signed_body());
        self.tx_id = self.compute_id();
        self
    }

    /// Genesis certified by `root`. `next_pk` is the key the first real transaction will use.
    pub fn certified(ledger: LedgerKind, owner: &KeyPair, next_pk: &PublicKey, root: &KeyPair) -> Self {
        let pk = owner.public();
        GenesisTransaction {
            tx_id: Hash256::ZERO,
            ledger,
            pk,
            output: TransactionOutput::genesis(next_pk.hash()),
            proof: GenesisProof::Certificate { root: root.public(), sig: root.sign(&certificate_body(&pk)) },
            sig: Signature([0; 64]),
        }
        .finish(owner)
    }

    pub fn burned(ledger: LedgerKind, owner: &KeyPair, next_pk: &PublicKey, burn_ref: Hash256) -> Self {
        GenesisTransaction {
            tx_id: Hash256::ZERO,
            ledger,
            pk: owner.public(),
            output: TransactionOutput::genesis(next_pk.hash()),
            proof: GenesisProof::Burn { burn_ref },
            sig: Signature([0; 64]),
        }
        .finish(owner)
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrustRoots {
    roots: BTreeSet<PublicKey>,
}

impl TrustRoots {
    pub fn new(roots: impl IntoIterator<Item = PublicKey>) -> Self {
        TrustRoots { roots: roots.into_iter().collect() }
    }

    pub fn contains(&self, pk: &PublicKey) -> bool {
        self.roots.contains(pk)
    }
}

/// Stand-in for a public coin ledger holding burn entries.
#[derive(Clone, Debug, Default)]
pub struct MockBurnLedger {
    entries: HashMap<Hash256, PublicKey>,
}

impl MockBurnLedger {
    pub fn record(&mut self, address: Hash256, pk: PublicKey) {
        self.entries.insert(address, pk);
    }

    pub fn lookup(&self, address: &Hash256) -> Option<&PublicKey> {
        self.entries.get(address)
    }
}

pub fn verify_genesis(g: &GenesisTransaction, roots: &TrustRoots, burns: &MockBurnLedger) -> bool {
    if g.output.accepted != 0 || g.output.rejected != 0 {
        return false;
    }
    if g.tx_id != g.compute_id() {
        return false;
    }
    let proof_ok = match &g.proof {
        GenesisProof::Certificate { root, sig } => {
            roots.contains(root) && verify(root, &certificate_body(&g.pk), sig)
        }
        GenesisProof::Burn { burn_ref } => burns.lookup(burn_ref) == Some(&g.pk),
    };
    proof_ok && verify(&g.pk, &g.signed_body(), &g.sig)
}
