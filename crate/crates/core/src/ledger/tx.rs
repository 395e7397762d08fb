//! Overlay transaction formats.

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::codec::{serde_hex, Dec, Enc};
use crate::crypto::{self, hash, Hash256, KeyPair, PublicKey, Signature};
use crate::error::{CodecError, CryptoError};
use crate::ids::DeviceId;
use crate::ledger::genesis::GenesisTransaction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    StoreLocally,
    StoreCloud,
    Access,
    Monitor,
    MonitorPeriodic,
}

impl ActionKind {
    pub const ALL: [ActionKind; 5] = [
        ActionKind::StoreLocally,
        ActionKind::StoreCloud,
        ActionKind::Access,
        ActionKind::Monitor,
        ActionKind::MonitorPeriodic,
    ];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(t: u8) -> Result<Self, CodecError> {
        ActionKind::ALL.get(t as usize).copied().ok_or(CodecError::Tag(t))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerKind {
    Multisig,
    SingleSig,
}

impl LedgerKind {
    pub fn tag(self) -> u8 {
        match self {
            LedgerKind::Multisig => 0,
            LedgerKind::SingleSig => 1,
        }
    }
}

/// Plaintext metadata. Stored sealed to the requestee key inside the transaction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub action: ActionKind,
    pub target_device: DeviceId,
    /// Hash of a stored blob, set by store-cloud transactions.
    pub data_hash: Option<Hash256>,
}

impl Metadata {
    pub fn new(action: ActionKind, target_device: DeviceId) -> Self {
        Metadata { action, target_device, data_hash: None }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut e = Enc::new();
        e.u8(self.action.tag()).u32(self.target_device.0).opt(self.data_hash.as_ref(), |e, h| {
            e.hash(h);
        });
        e.finish()
    }

    pub fn decode(buf: &[u8]) -> Result<Self, CodecError> {
        let mut d = Dec::new(buf);
        let action = ActionKind::from_tag(d.u8()?)?;
        let target_device = DeviceId(d.u32()?);
        let data_hash = d.opt(|d| d.hash())?;
        d.finish()?;
        Ok(Metadata { action, target_device, data_hash })
    }

    pub fn seal<R: RngCore + CryptoRng>(&self, requestee: &PublicKey, rng: &mut R) -> Result<Vec<u8>, CryptoError> {
        crypto::seal_to(requestee, &self.encode(), rng)
    }

    pub fn open(sealed: &[u8], requestee: &KeyPair) -> Option<Self> {
        let plain = crypto::open_sealed(requestee, sealed).ok()?;
        Metadata::decode(&plain).ok()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionOutput {
    pub accepted: u64,
    pub rejected: u64,
    pub next_pk_hash: Hash256,
}

impl TransactionOutput {
    pub fn genesis(next_pk_hash: Hash256) -> Self {
        TransactionOutput { accepted: 0, rejected: 0, next_pk_hash }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultisigTransaction {
    pub tx_id: Hash256,
    pub prev_tx_id: Hash256,
    pub requester_pk: PublicKey,
    pub requester_sig: Signature,
    pub requestee_pk: PublicKey,
    pub requestee_sig: Option<Signature>,
    pub output: TransactionOutput,
    #[serde(with = "serde_hex")]
    pub metadata: Vec<u8>,
}

impl MultisigTransaction {
    /// Bytes signed by the requester. The counters are left out because the
    /// requestee sets them after the requester has signed.
    pub fn requester_body(&self) -> Vec<u8> {
        let mut e = Enc::tagged(b"lsb/multisig/requester");
        e.hash(&self.prev_tx_id)
            .pk(&self.requester_pk)
            .pk(&self.requestee_pk)
            .hash(&self.output.next_pk_hash)
            .bytes(&self.metadata);
        e.finish()
    }

    /// Bytes signed by the requestee: everything except its own signature and the id.
    pub fn requestee_body(&self) -> Vec<u8> {
        let mut e = Enc::tagged(b"lsb/multisig/requestee");
        e.hash(&self.prev_tx_id)
            .pk(&self.requester_pk)
            .sig(&self.requester_sig)
            .pk(&self.requestee_pk)
            .u64(self.output.accepted)
            .u64(self.output.rejected)
            .hash(&self.output.next_pk_hash)
            .bytes(&self.metadata);
        e.finish()
    }

    fn encode_fields(&self, e: &mut Enc) {
        e.hash(&self.prev_tx_id)
            .pk(&self.requester_pk)
            .sig(&self.requester_sig)
            .pk(&self.requestee_pk)
            .opt(self.requestee_sig.as_ref(), |e, s| {
                e.sig(s);
            })
            .u64(self.output.accepted)
            .u64(self.output.rejected)
            .hash(&self.output.next_pk_hash)
            .bytes(&self.metadata);
    }

    pub fn compute_id(&self) -> Hash256 {
        let mut e = Enc::tagged(b"lsb/multisig/id");
        self.encode_fields(&mut e);
        hash(e.as_slice())
    }

    pub fn encode(&self, e: &mut Enc) {
        e.hash(&self.tx_id);
        self.encode_fields(e);
    }

    pub fn decode(d: &mut Dec) -> Result<Self, CodecError> {
        Ok(MultisigTransaction {
            tx_id: d.hash()?,
            prev_tx_id: d.hash()?,
            requester_pk: d.pk()?,
            requester_sig: d.sig()?,
            requestee_pk: d.pk()?,
            requestee_sig: d.opt(|d| d.sig())?,
            output: TransactionOutput { accepted: d.u64()?, rejected: d.u64()?, next_pk_hash: d.hash()? },
            metadata: d.bytes()?.to_vec(),
        })
    }

    pub fn is_complete(&self) -> bool {
        self.requestee_sig.is_some()
    }

    pub fn refresh_id(&mut self) {
        self.tx_id = self.compute_id();
    }
}

/// Increment one counter, sign, and fix the id.
pub fn requestee_sign(tx: &mut MultisigTransaction, requestee: &KeyPair, accept: bool) {
    if accept {
        tx.output.accepted += 1;
    } else {
        tx.output.rejected += 1;
    }
    tx.requestee_sig = Some(requestee.sign(&tx.requestee_body()));
    tx.refresh_id();
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingleSigTransaction {
    pub tx_id: Hash256,
    pub prev_tx_id: Hash256,
    pub requester_pk: PublicKey,
    pub requester_sig: Signature,
    pub next_pk_hash: Hash256,
    pub payload: Hash256,
}

impl SingleSigTransaction {
    pub fn signed_body(&self) -> Vec<u8> {
        let mut e = Enc::tagged(b"lsb/single/requester");
        e.hash(&self.prev_tx_id).pk(&self.requester_pk).hash(&self.next_pk_hash).hash(&self.payload);
        e.finish()
    }

    fn encode_fields(&self, e: &mut Enc) {
        e.hash(&self.prev_tx_id)
            .pk(&self.requester_pk)
            .sig(&self.requester_sig)
            .hash(&self.next_pk_hash)
            .hash(&self.payload);
    }

    pub fn compute_id(&self) -> Hash256 {
        let mut e = Enc::tagged(b"lsb/single/id");
        self.encode_fields(&mut e);
        hash(e.as_slice())
    }

    pub fn encode(&self, e: &mut Enc) {
        e.hash(&self.tx_id);
        self.encode_fields(e);
    }

    pub fn decode(d: &mut Dec) -> Result<Self, CodecError> {
        Ok(SingleSigTransaction {
            tx_id: d.hash()?,
            prev_tx_id: d.hash()?,
            requester_pk: d.pk()?,
            requester_sig: d.sig()?,
            next_pk_hash: d.hash()?,
            payload: d.hash()?,
        })
    }
}

/// Anything that can sit in a public-chain block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ChainTx {
    Genesis(GenesisTransaction),
    Multisig(MultisigTransaction),
    SingleSig(SingleSigTransaction),
}

impl ChainTx {
    pub fn tx_id(&self) -> Hash256 {
        match self {
            ChainTx::Genesis(g) => g.tx_id,
            ChainTx::Multisig(t) => t.tx_id,
            ChainTx::SingleSig(t) => t.tx_id,
        }
    }

    pub fn compute_id(&self) -> Hash256 {
        match self {
            ChainTx::Genesis(g) => g.compute_id(),
            ChainTx::Multisig(t) => t.compute_id(),
            ChainTx::SingleSig(t) => t.compute_id(),
        }
    }

    pub fn prev_tx_id(&self) -> Option<Hash256> {
        match self {
            ChainTx::Genesis(_) => None,
            ChainTx::Multisig(t) => Some(t.prev_tx_id),
            ChainTx::SingleSig(t) => Some(t.prev_tx_id),
        }
    }

    pub fn ledger(&self) -> LedgerKind {
        match self {
            ChainTx::Genesis(g) => g.ledger,
            ChainTx::Multisig(_) => LedgerKind::Multisig,
            ChainTx::SingleSig(_) => LedgerKind::SingleSig,
        }
    }

    /// The key-hash commitment this transaction makes for its successor.
    pub fn next_pk_hash(&self) -> Hash256 {
        match self {
            ChainTx::Genesis(g) => g.output.next_pk_hash,
            ChainTx::Multisig(t) => t.output.next_pk_hash,
            ChainTx::SingleSig(t) => t.next_pk_hash,
        }
    }

    /// (accepted, rejected) counters; single-signature records carry none.
    pub fn counters(&self) -> (u64, u64) {
        match self {
            ChainTx::Genesis(g) => (g.output.accepted, g.output.rejected),
            ChainTx::Multisig(t) => (t.output.accepted, t.output.rejected),
            ChainTx::SingleSig(_) => (0, 0),
        }
    }

    pub fn encode(&self, e: &mut Enc) {
        match self {
            ChainTx::Genesis(g) => {
                e.u8(0);
                g.encode(e);
            }
            ChainTx::Multisig(t) => {
                e.u8(1);
                t.encode(e);
            }
            ChainTx::SingleSig(t) => {
                e.u8(2);
                t.encode(e);
            }
        }
    }

    pub fn decode(d: &mut Dec) -> Result<Self, CodecError> {
        match d.u8()? {
            0 => Ok(ChainTx::Genesis(GenesisTransaction::decode(d)?)),
            1 => Ok(ChainTx::Multisig(MultisigTransaction::decode(d)?)),
            2 => Ok(ChainTx::SingleSig(SingleSigTransaction::decode(d)?)),
            t => Err(CodecError::Tag(t)),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Enc::new();
        self.encode(&mut e);
        e.finish()
    }

    pub fn encoded_len(&self) -> usize {
        self.to_bytes().len()
    }
}

/// Key material and chain position of one requester in one ledger.
#[derive(Clone, Debug)]
pub struct RequesterState {
    pub ledger: LedgerKind,
    /// Key whose hash the previous transaction committed to.
    pub active: KeyPair,
    /// Key whose hash the next transaction will commit to.
    pub upcoming: KeyPair,
    pub prev_tx_id: Hash256,
    pub prev_counters: (u64, u64),
}

impl RequesterState {
    /// Start after `genesis`, whose commitment must be `hash(active.pk)`.
    pub fn after_genesis(genesis: &GenesisTransaction, active: KeyPair, upcoming: KeyPair) -> Option<Self> {
        if genesis.output.next_pk_hash != active.public().hash() {
            return None;
        }
        Some(RequesterState {
            ledger: genesis.ledger,
            active,
            upcoming,
            prev_tx_id: genesis.tx_id,
            prev_counters: (0, 0),
        })
    }

    /// Requester half of a multisig transaction.
    pub fn request<R: RngCore + CryptoRng>(
        &self,
        requestee_pk: PublicKey,
        metadata: &Metadata,
        rng: &mut R,
    ) -> Result<MultisigTransaction, CryptoError> {
        let sealed = metadata.seal(&requestee_pk, rng)?;
        Ok(self.request_with_sealed(requestee_pk, sealed))
    }

    pub fn request_with_sealed(&self, requestee_pk: PublicKey, metadata: Vec<u8>) -> MultisigTransaction {
        let mut tx = MultisigTransaction {
            tx_id: Hash256::ZERO,
            prev_tx_id: self.prev_tx_id,
            requester_pk: self.active.public(),
            requester_sig: Signature([0; 64]),
            requestee_pk,
            requestee_sig: None,
            output: TransactionOutput {
                accepted: self.prev_counters.0,
                rejected: self.prev_counters.1,
                next_pk_hash: self.upcoming.public().hash(),
            },
            metadata,
        };
        tx.requester_sig = self.active.sign(&tx.requester_body());
        tx.refresh_id();
        tx
    }

    pub fn single_sig(&self, payload: Hash256) -> SingleSigTransaction {
        let mut tx = SingleSigTransaction {
            tx_id: Hash256::ZERO,
            prev_tx_id: self.prev_tx_id,
            requester_pk: self.active.public(),
            requester_sig: Signature([0; 64]),
            next_pk_hash: self.upcoming.public().hash(),
            payload,
        };
        tx.requester_sig = self.active.sign(&tx.signed_body());
        tx.tx_id = tx.compute_id();
        tx
    }

    /// Advance past a finished transaction and rotate keys.
    pub fn commit<R: RngCore + CryptoRng>(&mut self, done: &ChainTx, rng: &mut R) {
        self.prev_tx_id = done.tx_id();
        self.prev_counters = done.counters();
        let fresh = crypto::keygen(rng);
        self.active = std::mem::replace(&mut self.upcoming, fresh);
    }
}

/// Build a complete transaction in one step, playing both parties.
pub fn build_multisig<R: RngCore + CryptoRng>(
    requester: &RequesterState,
    requestee: &KeyPair,
    action: ActionKind,
    target_device: DeviceId,
    accept: bool,
    rng: &mut R,
) -> Result<MultisigTransaction, CryptoError> {
    let mut tx = requester.request(requestee.public(), &Metadata::new(action, target_device), rng)?;
    requestee_sign(&mut tx, requestee, accept);
    Ok(tx)
}
