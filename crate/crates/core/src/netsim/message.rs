//! Messages exchanged between simulated nodes and the handler output contract.

use serde::{Deserialize, Serialize};

use crate::codec::Enc;
use crate::crypto::{Hash256, KeyPair, PublicKey, Signature};
use crate::dtm::DtmMsg;
use crate::ids::{DeviceId, NodeId, ObmId};
use crate::ledger::{Block, ChainTx, MultisigTransaction};
use crate::metrics::MetricEvent;
use crate::time::{SimDuration, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    TxSubmit,
    TxForward,
    TxDeliver,
    BlockAnnounce,
    VouchNotice,
    DtmProposal,
    DtmCosign,
    DataPacket,
    StoreRequest,
    KeyControl,
    LocalTx,
}

impl MessageKind {
    pub const ALL: [MessageKind; 11] = [
        MessageKind::TxSubmit,
        MessageKind::TxForward,
        MessageKind::TxDeliver,
        MessageKind::BlockAnnounce,
        MessageKind::VouchNotice,
        MessageKind::DtmProposal,
        MessageKind::DtmCosign,
        MessageKind::DataPacket,
        MessageKind::StoreRequest,
        MessageKind::KeyControl,
        MessageKind::LocalTx,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::TxSubmit => "tx_submit",
            MessageKind::TxForward => "tx_forward",
            MessageKind::TxDeliver => "tx_deliver",
            MessageKind::BlockAnnounce => "block_announce",
            MessageKind::VouchNotice => "vouch_notice",
            MessageKind::DtmProposal => "dtm_proposal",
            MessageKind::DtmCosign => "dtm_cosign",
            MessageKind::DataPacket => "data_packet",
            MessageKind::StoreRequest => "store_request",
            MessageKind::KeyControl => "key_control",
            MessageKind::LocalTx => "local_tx",
        }
    }

    /// Transaction and block management traffic, as opposed to data.
    pub fn is_management(self) -> bool {
        matches!(
            self,
            MessageKind::TxSubmit
                | MessageKind::TxForward
                | MessageKind::TxDeliver
                | MessageKind::BlockAnnounce
                | MessageKind::VouchNotice
        )
    }
}

/// Signed statement that `voucher` accepted a block of `generator`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vouch {
    pub voucher: ObmId,
    pub generator: ObmId,
    pub block_hash: Hash256,
    pub sig: Signature,
}

impl Vouch {
    /// The vouch signature doubles as the verifier signature on the block header.
    pub fn body(block_hash: &Hash256) -> Vec<u8> {
        crate::ledger::block::verifier_message(block_hash)
    }

    pub fn new(voucher: ObmId, generator: ObmId, block_hash: Hash256, key: &KeyPair) -> Self {
        let sig = key.sign(&Vouch::body(&block_hash));
        Vouch { voucher, generator, block_hash, sig }
    }

    pub fn valid(&self, voucher_pk: &PublicKey) -> bool {
        crate::crypto::verify(voucher_pk, &Vouch::body(&self.block_hash), &self.sig)
    }
}

#[derive(Clone, Debug)]
pub struct DataPacket {
    /// Final dual-signed transaction this response settles.
    pub tx: MultisigTransaction,
    pub accepted: bool,
    pub payload_len: u32,
    pub sent_at: SimTime,
}

#[derive(Clone, Debug)]
pub struct StoreRequest {
    pub tx: MultisigTransaction,
    pub blob: Vec<u8>,
    pub credential: PublicKey,
    pub reply_to: NodeId,
}

#[derive(Clone, Debug)]
pub enum KeyControl {
    /// Member asks an OBM to serve it.
    Associate { member_pk: PublicKey },
    /// Requestee updates its OBM key list.
    AllowAll { requestee: PublicKey },
    Allow { requester: PublicKey, requestee: PublicKey },
    Deny { requester: PublicKey, requestee: PublicKey },
    /// Home-tier key revocation notice.
    Revoke { a: DeviceId, b: DeviceId },
}

#[derive(Clone, Debug)]
pub enum Message {
    TxSubmit { tx: ChainTx, reply_to: NodeId },
    TxForward { tx: ChainTx, reply_to: NodeId },
    TxDeliver { tx: MultisigTransaction, reply_to: NodeId },
    BlockAnnounce(Box<Block>),
    VouchNotice(Vouch),
    DtmProposal(DtmMsg),
    DtmCosign(DtmMsg),
    DataPacket(Box<DataPacket>),
    StoreRequest(Box<StoreRequest>),
    KeyControl(KeyControl),
    LocalTx { device: DeviceId, body: Vec<u8> },
}

/// Fixed per-packet header overhead on the wire.
pub const HEADER_BYTES: usize = 40;

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::TxSubmit { .. } => MessageKind::TxSubmit,
            Message::TxForward { .. } => MessageKind::TxForward,
            Message::TxDeliver { .. } => MessageKind::TxDeliver,
            Message::BlockAnnounce(_) => MessageKind::BlockAnnounce,
            Message::VouchNotice(_) => MessageKind::VouchNotice,
            Message::DtmProposal(_) => MessageKind::DtmProposal,
            Message::DtmCosign(_) => MessageKind::DtmCosign,
            Message::DataPacket(_) => MessageKind::DataPacket,
            Message::StoreRequest(_) => MessageKind::StoreRequest,
            Message::KeyControl(_) => MessageKind::KeyControl,
            Message::LocalTx { .. } => MessageKind::LocalTx,
        }
    }

    /// Canonical body length plus header.
    pub fn wire_size(&self) -> usize {
        let body = match self {
            Message::TxSubmit { tx, .. } | Message::TxForward { tx, .. } => tx.encoded_len() + 4,
            Message::TxDeliver { tx, .. } => {
                let mut e = Enc::new();
                tx.encode(&mut e);
                e.len() + 4
            }
            Message::BlockAnnounce(b) => b.to_bytes().len(),
            Message::VouchNotice(_) => 4 + 4 + 36 + 68,
            Message::DtmProposal(m) | Message::DtmCosign(m) => m.wire_len(),
            Message::DataPacket(p) => {
                let mut e = Enc::new();
                p.tx.encode(&mut e);
                e.len() + 1 + p.payload_len as usize
            }
            Message::StoreRequest(r) => {
                let mut e = Enc::new();
                r.tx.encode(&mut e);
                e.len() + r.blob.len() + 36 + 4
            }
            Message::KeyControl(_) => 72,
            Message::LocalTx { body, .. } => 4 + body.len(),
        };
        body + HEADER_BYTES
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Timer {
    /// Waiting-period expiry for block generation attempt `epoch`.
    Waiting(u64),
    /// Re-check whether block generation may start.
    Recheck,
    /// One extra block of a scripted burst.
    Burst(u32),
    DtmSample(u64),
    DtmPropose(u64),
    DtmActivate(u64),
    /// Load arrival for a requester.
    Arrival,
    /// No answer from the associated OBM in time.
    ServiceTimeout(u64),
    /// Periodic monitor request.
    Periodic(u32),
}

#[derive(Debug)]
pub enum Out {
    Unicast { to: NodeId, msg: Message },
    BroadcastObms { msg: Message },
    Timer { at: SimTime, timer: Timer },
    Metric(MetricEvent),
    /// Ask the engine to re-attach this member to another OBM.
    Reattach { member: NodeId, obm: NodeId },
    /// Agreed overlay resize, applied at `at`.
    Recluster { m: usize, at: SimTime },
}

/// Everything a handler emits for one event.
#[derive(Debug, Default)]
pub struct Outbox {
    pub items: Vec<Out>,
}

impl Outbox {
    pub fn unicast(&mut self, to: NodeId, msg: Message) {
        self.items.push(Out::Unicast { to, msg });
    }

    pub fn broadcast(&mut self, msg: Message) {
        self.items.push(Out::BroadcastObms { msg });
    }

    pub fn timer(&mut self, at: SimTime, timer: Timer) {
        self.items.push(Out::Timer { at, timer });
    }

    pub fn timer_after(&mut self, now: SimTime, d: SimDuration, timer: Timer) {
        self.timer(now + d, timer);
    }

    pub fn metric(&mut self, m: MetricEvent) {
        self.items.push(Out::Metric(m));
    }
}
