//! Cloud storage as an overlay node. It acts as requestee for store-cloud
//! transactions and keeps records per account credential.

use std::collections::BTreeMap;

use crate::crypto::{hash, KeyPair, PublicKey};
use crate::ids::NodeId;
use crate::ledger::{requestee_sign, ActionKind, ChainTx, Metadata, MultisigTransaction};
use crate::metrics::MetricEvent;
use crate::netsim::message::{DataPacket, Message, Outbox, StoreRequest};
use crate::smarthome::storage::{Credential, StorageRecord};
use crate::time::SimTime;

#[derive(Clone, Debug)]
pub struct CloudStorage {
    pub id: NodeId,
    pub obm: NodeId,
    pub key: KeyPair,
    accounts: BTreeMap<PublicKey, Vec<StorageRecord>>,
    /// Credentials seen per requester key, the raw material of a linking probe.
    pub observed: Vec<(PublicKey, PublicKey)>,
}

impl CloudStorage {
    pub fn new(id: NodeId, obm: NodeId, key: KeyPair) -> Self {
        CloudStorage { id, obm, key, accounts: BTreeMap::new(), observed: Vec::new() }
    }

    pub fn public_key(&self) -> PublicKey {
        self.key.public()
    }

    /// Store the blob and countersign. A blob that does not match the hash in
    /// the transaction metadata is refused and the transaction signed as rejected.
    pub fn handle_store(&mut self, now: SimTime, req: &StoreRequest) -> (MultisigTransaction, bool) {
        let mut tx = req.tx.clone();
        let ok = match Metadata::open(&tx.metadata, &self.key) {
            Some(m) => m.action == ActionKind::StoreCloud && m.data_hash == Some(hash(&req.blob)),
            None => false,
        };
        if ok {
            self.accounts
                .entry(req.credential)
                .or_default()
                .push(StorageRecord::new(req.blob.clone(), Credential::Account(req.credential), now));
            self.observed.push((tx.requester_pk, req.credential));
        }
        requestee_sign(&mut tx, &self.key, ok);
        (tx, ok)
    }

    pub fn records(&self, credential: &PublicKey) -> &[StorageRecord] {
        self.accounts.get(credential).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn account_count(&self) -> usize {
        self.accounts.len()
    }

    /// Malicious cloud: overwrite a stored blob without touching its hash.
    pub fn tamper(&mut self, credential: &PublicKey, index: usize, blob: Vec<u8>) -> bool {
        match self.accounts.get_mut(credential).and_then(|v| v.get_mut(index)) {
            Some(r) => {
                r.blob = blob;
                true
            }
            None => false,
        }
    }

    pub fn on_message(&mut self, now: SimTime, _from: NodeId, msg: Message) -> Outbox {
        let mut out = Outbox::default();
        if let Message::StoreRequest(req) = msg {
            let (tx, ok) = self.handle_store(now, &req);
            out.metric(MetricEvent::event(now, self.id, if ok { "cloud_stored" } else { "cloud_refused" }, Some(req.reply_to), req.blob.len() as f64));
            out.unicast(
                req.reply_to,
                Message::DataPacket(Box::new(DataPacket { tx: tx.clone(), accepted: ok, payload_len: 0, sent_at: now })),
            );
            out.unicast(self.obm, Message::TxSubmit { tx: ChainTx::Multisig(tx), reply_to: self.id });
        }
        out
    }
}
