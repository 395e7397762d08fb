//! The local blockchain manager: device registry, local ledger, policy
//! enforcement, key distribution and the bridge to the overlay.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::crypto::{decrypt, hash, keygen, DhGroupParams, Hash256, KeyPair, PublicKey, SymmetricKey};
use crate::error::SmartHomeError;
use crate::ids::{DeviceId, NodeId};
use crate::ledger::{
    requestee_sign, ActionKind, ChainTx, Decision, LocalIl, LocalIlTransaction, LocalTxType, Metadata,
    MultisigTransaction, PolicyEntry, Requester, RequesterState, SingleSigTransaction,
};
use crate::metrics::MetricEvent;
use crate::netsim::message::{DataPacket, KeyControl, Message, Outbox, StoreRequest, Timer};
use crate::rng::SimRng;
use crate::smarthome::device::{Device, DhIdentity, LBM, STORAGE};
use crate::smarthome::storage::{LocalStorage, StorageRecord};
use crate::time::{SimDuration, SimTime};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbmConfig {
    /// Inbound overlay transactions per second tolerated from one requester key.
    pub max_inbound_rate: f64,
    /// Payload size of a data packet, bytes.
    pub payload_bytes: u32,
    pub il_block_capacity: usize,
}

impl Default for LbmConfig {
    fn default() -> Self {
        LbmConfig { max_inbound_rate: 100.0, payload_bytes: 1024, il_block_capacity: 16 }
    }
}

/// The owner's answers, scripted per scenario.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OwnerApproval {
    pub approve_all: bool,
    pub approved: BTreeSet<u32>,
}

impl OwnerApproval {
    pub fn all() -> Self {
        OwnerApproval { approve_all: true, approved: BTreeSet::new() }
    }

    pub fn approves(&self, d: DeviceId) -> bool {
        self.approve_all || self.approved.contains(&d.0)
    }
}

#[derive(Clone, Debug)]
pub struct KeyGrant {
    pub key: SymmetricKey,
    pub epoch: u64,
    pub valid: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CloudAccount {
    /// Requestee key of the cloud service.
    pub cloud_pk: PublicKey,
    pub cloud_node: NodeId,
    pub cloud_obm: NodeId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoreReceipt {
    pub tx_id: Hash256,
    pub device: DeviceId,
    pub data_hash: Hash256,
    pub credential: PublicKey,
}

#[derive(Clone, Debug)]
struct PendingStore {
    device: DeviceId,
    data_hash: Hash256,
    credential: PublicKey,
}

#[derive(Clone, Debug)]
struct Subscription {
    to: NodeId,
    device: DeviceId,
    tx: MultisigTransaction,
    period: SimDuration,
}

/// What the LBM does with one overlay transaction.
#[derive(Clone, Debug)]
pub struct OverlayResponse {
    /// The dual-signed transaction, ready for the owning OBM.
    pub tx: MultisigTransaction,
    pub accepted: bool,
    pub action: Option<ActionKind>,
    pub device: Option<DeviceId>,
    /// Data for the requester, present only when served.
    pub data: Option<Vec<u8>>,
    pub il_tx: Option<Hash256>,
    /// Keylist update for the LBM's OBM after a rate violation.
    pub deny: Option<KeyControl>,
    /// Repeat interval for periodic monitoring.
    pub period: Option<SimDuration>,
    pub reason: &'static str,
}

fn pair(a: DeviceId, b: DeviceId) -> (DeviceId, DeviceId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

pub struct LbmState {
    pub id: NodeId,
    pub obm: NodeId,
    /// Overlay identity; requestee key for transactions addressed to this home.
    pub key: KeyPair,
    pub config: LbmConfig,
    pub params: DhGroupParams,
    pub dh: DhIdentity,
    pub il: LocalIl,
    pub devices: BTreeMap<DeviceId, Device>,
    pub storage: LocalStorage,
    grants: BTreeMap<(DeviceId, DeviceId), KeyGrant>,
    revoked: BTreeSet<[u8; 32]>,
    next_epoch: u64,
    /// Device ids refused for lack of owner approval.
    pub approval_queue: Vec<DeviceId>,
    requester: Option<RequesterState>,
    anchor: Option<RequesterState>,
    pub cloud: Option<CloudAccount>,
    credentials: BTreeMap<DeviceId, KeyPair>,
    pending: Option<PendingStore>,
    pub receipts: Vec<StoreReceipt>,
    inbound: BTreeMap<PublicKey, VecDeque<SimTime>>,
    pub denied: BTreeSet<PublicKey>,
    monitor_periods: BTreeMap<DeviceId, SimDuration>,
    subscriptions: Vec<Subscription>,
    pub local_accepted: u64,
    pub local_rejected: u64,
    pub overlay_handled: u64,
    rng: SimRng,
}

impl LbmState {
    pub fn new(id: NodeId, obm: NodeId, key: KeyPair, policy: Vec<PolicyEntry>, config: LbmConfig, mut rng: SimRng) -> Self {
        let params = DhGroupParams::default();
        let dh = DhIdentity::generate(&params, &mut rng);
        let storage = LocalStorage::new(&params, &mut rng);
        LbmState {
            id,
            obm,
            key,
            il: LocalIl::new(policy, config.il_block_capacity),
            config,
            params,
            dh,
            devices: BTreeMap::new(),
            storage,
            grants: BTreeMap::new(),
            revoked: BTreeSet::new(),
            next_epoch: 1,
            approval_queue: Vec::new(),
            requester: None,
            anchor: None,
            cloud: None,
            credentials: BTreeMap::new(),
            pending: None,
            receipts: Vec::new(),
            inbound: BTreeMap::new(),
            denied: BTreeSet::new(),
            monitor_periods: BTreeMap::new(),
            subscriptions: Vec::new(),
            local_accepted: 0,
            local_rejected: 0,
            overlay_handled: 0,
            rng,
        }
    }

    pub fn public_key(&self) -> PublicKey {
        self.key.public()
    }

    /// Chain positions for transactions this home issues: multisig for cloud
    /// storage, single-signature for ledger anchors.
    pub fn attach_overlay(&mut self, multisig: Option<RequesterState>, single: Option<RequesterState>) {
        self.requester = multisig;
        self.anchor = single;
    }

    /// Join `obm` and let any requester reach this home through it. Per-key
    /// denials still apply.
    pub fn associate(&mut self, obm: NodeId) -> Outbox {
        self.obm = obm;
        let pk = self.key.public();
        let mut out = Outbox::default();
        out.unicast(obm, Message::KeyControl(KeyControl::Associate { member_pk: pk }));
        out.unicast(obm, Message::KeyControl(KeyControl::AllowAll { requestee: pk }));
        for requester in &self.denied {
            out.unicast(obm, Message::KeyControl(KeyControl::Deny { requester: *requester, requestee: pk }));
        }
        out
    }

    pub fn set_cloud(&mut self, account: CloudAccount) {
        self.cloud = Some(account);
    }

    pub fn set_monitor_period(&mut self, device: DeviceId, period: SimDuration) {
        self.monitor_periods.insert(device, period);
    }

    pub fn set_policy(&mut self, policy: Vec<PolicyEntry>) {
        self.il.update_policy(policy);
    }

    pub fn grant(&self, a: DeviceId, b: DeviceId) -> Option<&KeyGrant> {
        self.grants.get(&pair(a, b))
    }

    /// Register a device. Its key with the LBM comes from DH between the two.
    pub fn device_genesis(&mut self, mut device: Device, owner_approval: bool) -> Result<LocalIlTransaction, SmartHomeError> {
        if self.devices.contains_key(&device.id) {
            return Err(SmartHomeError::DuplicateDevice(device.id.0));
        }
        if !owner_approval {
            self.approval_queue.push(device.id);
            return Err(SmartHomeError::NotApproved);
        }
        let key = self.dh.derive(device.dh.public, 0, &self.params)?;
        debug_assert_eq!(Some(key), device.dh.derive(self.dh.public, 0, &self.params).ok());
        device.shared_key_with_lbm = Some(key);
        device.install_key(LBM, key);
        let tx = self.il.append(device.id, LocalTxType::Genesis, None);
        self.devices.insert(device.id, device);
        Ok(tx)
    }

    fn dh_public_of(&self, d: DeviceId) -> Option<u64> {
        if d == STORAGE {
            Some(self.storage.dh.public)
        } else {
            self.devices.get(&d).map(|x| x.dh.public)
        }
    }

    fn derive_at(&self, a: DeviceId, b: DeviceId, epoch: u64) -> Result<SymmetricKey, SmartHomeError> {
        let peer = self.dh_public_of(b).ok_or(SmartHomeError::UnknownDevice(b.0))?;
        if a == STORAGE {
            return self.storage.dh.derive(peer, epoch, &self.params);
        }
        self.devices.get(&a).ok_or(SmartHomeError::UnknownDevice(a.0))?.dh.derive(peer, epoch, &self.params)
    }

    fn install(&mut self, a: DeviceId, b: DeviceId, key: Option<SymmetricKey>) {
        for (me, peer) in [(a, b), (b, a)] {
            match (me == STORAGE, key) {
                (true, Some(k)) => self.storage.install_key(peer, k),
                (true, None) => self.storage.drop_key(peer),
                (false, k) => {
                    if let Some(dev) = self.devices.get_mut(&me) {
                        match k {
                            Some(k) => dev.install_key(peer, k),
                            None => dev.drop_key(peer),
                        }
                    }
                }
            }
        }
    }

    /// Let `a` and `b` talk directly. Either may be `STORAGE`.
    pub fn grant_shared_key(&mut self, a: DeviceId, b: DeviceId, owner_approval: bool) -> Result<SymmetricKey, SmartHomeError> {
        for d in [a, b] {
            if self.dh_public_of(d).is_none() {
                return Err(SmartHomeError::UnknownDevice(d.0));
            }
        }
        if !owner_approval {
            return Err(SmartHomeError::NotApproved);
        }
        if self.grants.get(&pair(a, b)).is_some_and(|g| g.valid) {
            self.revoke_shared_key(a, b)?;
        }
        let (key, epoch) = loop {
            let epoch = self.next_epoch;
            self.next_epoch += 1;
            let ka = self.derive_at(a, b, epoch)?;
            let kb = self.derive_at(b, a, epoch)?;
            debug_assert_eq!(ka, kb);
            if !self.revoked.contains(&ka.0) {
                break (ka, epoch);
            }
        };
        self.install(a, b, Some(key));
        self.grants.insert(pair(a, b), KeyGrant { key, epoch, valid: true });
        let owner = if a == STORAGE { b } else { a };
        self.il.append(owner, LocalTxType::KeyGrant, None);
        Ok(key)
    }

    /// Invalidate the key of `a` and `b`; returns the notices for both endpoints.
    pub fn revoke_shared_key(&mut self, a: DeviceId, b: DeviceId) -> Result<Vec<(DeviceId, KeyControl)>, SmartHomeError> {
        let g = self.grants.get_mut(&pair(a, b)).filter(|g| g.valid).ok_or(SmartHomeError::NoKeyGrant)?;
        g.valid = false;
        self.revoked.insert(g.key.0);
        self.install(a, b, None);
        let owner = if a == STORAGE { b } else { a };
        self.il.append(owner, LocalTxType::KeyRevoke, None);
        Ok(vec![(a, KeyControl::Revoke { a, b }), (b, KeyControl::Revoke { a, b })])
    }

    /// Audited device-to-device delivery: the receiving endpoint accepts only
    /// messages under a currently valid grant.
    pub fn deliver_local(&mut self, from: DeviceId, to: DeviceId, ciphertext: &[u8]) -> Result<Vec<u8>, SmartHomeError> {
        let key = match self.grants.get(&pair(from, to)) {
            Some(g) if g.valid && !self.revoked.contains(&g.key.0) => g.key,
            _ => {
                self.local_rejected += 1;
                return Err(SmartHomeError::NoKeyGrant);
            }
        };
        match decrypt(&key, ciphertext) {
            Ok(p) => {
                self.local_accepted += 1;
                Ok(p)
            }
            Err(_) => {
                self.local_rejected += 1;
                Err(SmartHomeError::Unauthenticated)
            }
        }
    }

    /// Store a blob the device already encrypted for the storage.
    pub fn store_local(&mut self, now: SimTime, device: DeviceId, ciphertext: &[u8]) -> Result<StorageRecord, SmartHomeError> {
        if !self.devices.contains_key(&device) {
            return Err(SmartHomeError::UnknownDevice(device.0));
        }
        if self.il.policy_check(&Requester::Device(device), ActionKind::StoreLocally, device) == Decision::Deny {
            return Err(SmartHomeError::PolicyDenied);
        }
        if !self.grants.get(&pair(device, STORAGE)).is_some_and(|g| g.valid) {
            self.storage.rejected += 1;
            return Err(SmartHomeError::NoKeyGrant);
        }
        let rec = self.storage.accept(device, ciphertext, now)?.clone();
        self.il.append(device, LocalTxType::Action(ActionKind::StoreLocally), None);
        Ok(rec)
    }

    /// Device side and LBM side of a local store in one call.
    pub fn device_store_local(&mut self, now: SimTime, device: DeviceId, blob: &[u8]) -> Result<StorageRecord, SmartHomeError> {
        let dev = self.devices.get(&device).ok_or(SmartHomeError::UnknownDevice(device.0))?;
        let ct = dev.seal_for(STORAGE, blob, &mut self.rng)?;
        self.store_local(now, device, &ct)
    }

    /// Per-device account key used as the cloud credential.
    pub fn credential(&mut self, device: DeviceId) -> PublicKey {
        let rng = &mut self.rng;
        self.credentials.entry(device).or_insert_with(|| keygen(rng)).public()
    }

    /// Steps S1 to S3 of a cloud store: authorize, build the transaction with
    /// the blob hash in its metadata, and address the blob to the cloud.
    /// A policy denial returns before anything is built or sent.
    pub fn store_cloud_flow(&mut self, device: DeviceId, blob: Vec<u8>) -> Result<(NodeId, StoreRequest), SmartHomeError> {
        if !self.devices.contains_key(&device) {
            return Err(SmartHomeError::UnknownDevice(device.0));
        }
        if self.il.policy_check(&Requester::Device(device), ActionKind::StoreCloud, device) == Decision::Deny {
            return Err(SmartHomeError::PolicyDenied);
        }
        let cloud = self.cloud.ok_or(SmartHomeError::NotAttached)?;
        if self.pending.is_some() {
            return Err(SmartHomeError::Pending);
        }
        let credential = self.credential(device);
        let data_hash = hash(&blob);
        let meta = Metadata { action: ActionKind::StoreCloud, target_device: device, data_hash: Some(data_hash) };
        let req = self.requester.as_ref().ok_or(SmartHomeError::NotAttached)?;
        let tx = req.request(cloud.cloud_pk, &meta, &mut self.rng)?;
        self.il.append(device, LocalTxType::Action(ActionKind::StoreCloud), Some(tx.tx_id));
        self.pending = Some(PendingStore { device, data_hash, credential });
        Ok((cloud.cloud_node, StoreRequest { tx, blob, credential, reply_to: self.id }))
    }

    /// The cloud's countersigned transaction came back: advance our chain.
    pub fn on_store_ack(&mut self, tx: &MultisigTransaction) -> bool {
        let (Some(p), Some(req)) = (&self.pending, &mut self.requester) else {
            return false;
        };
        if tx.prev_tx_id != req.prev_tx_id || tx.requester_pk != req.active.public() || !tx.is_complete() {
            return false;
        }
        let accepted = tx.output.accepted > req.prev_counters.0;
        if accepted {
            self.receipts.push(StoreReceipt { tx_id: tx.tx_id, device: p.device, data_hash: p.data_hash, credential: p.credential });
        }
        req.commit(&ChainTx::Multisig(tx.clone()), &mut self.rng);
        self.pending = None;
        true
    }

    /// Compare a blob fetched from the cloud with the hash committed on chain.
    pub fn verify_cloud_copy(&self, tx_id: &Hash256, blob: &[u8]) -> Option<bool> {
        self.receipts.iter().find(|r| &r.tx_id == tx_id).map(|r| r.data_hash == hash(blob))
    }

    /// Single-signature transaction carrying the digest of the local ledger.
    pub fn anchor_il(&mut self) -> Result<SingleSigTransaction, SmartHomeError> {
        if self.il.tx_count() == 0 {
            return Err(SmartHomeError::EmptyLedger);
        }
        let digest = self.il.digest();
        let st = self.anchor.as_mut().ok_or(SmartHomeError::NotAttached)?;
        let tx = st.single_sig(digest);
        st.commit(&ChainTx::SingleSig(tx.clone()), &mut self.rng);
        Ok(tx)
    }

    fn rate_exceeded(&mut self, now: SimTime, pk: PublicKey) -> bool {
        let window = SimDuration::from_secs(1);
        let q = self.inbound.entry(pk).or_default();
        q.push_back(now);
        while q.front().is_some_and(|t| now.since(*t) >= window) {
            q.pop_front();
        }
        q.len() as f64 > self.config.max_inbound_rate
    }

    fn finish(&mut self, mut tx: MultisigTransaction, accept: bool, reason: &'static str) -> OverlayResponse {
        requestee_sign(&mut tx, &self.key, accept);
        OverlayResponse {
            tx,
            accepted: accept,
            action: None,
            device: None,
            data: None,
            il_tx: None,
            deny: None,
            period: None,
            reason,
        }
    }

    /// Serve or refuse one overlay transaction delivered by our OBM.
    pub fn handle_overlay_tx(&mut self, now: SimTime, tx: MultisigTransaction) -> OverlayResponse {
        self.overlay_handled += 1;
        let requester = tx.requester_pk;
        if self.rate_exceeded(now, requester) {
            let mut r = self.finish(tx, false, "rate_limited");
            if self.denied.insert(requester) {
                r.deny = Some(KeyControl::Deny { requester, requestee: self.key.public() });
            }
            return r;
        }
        let Some(meta) = Metadata::open(&tx.metadata, &self.key) else {
            return self.finish(tx, false, "bad_metadata");
        };
        let (action, device) = (meta.action, meta.target_device);
        let Some(dev) = self.devices.get_mut(&device) else {
            return self.finish(tx, false, "unknown_device");
        };
        let allowed = dev.capabilities.contains(&action)
            && self.il.policy_check(&Requester::Key(requester), action, device) == Decision::Allow;
        let (data, reason) = if !allowed {
            (None, "policy_denied")
        } else {
            match action {
                ActionKind::Access => {
                    let stored = self.storage.latest(device).map(|r| r.blob.clone());
                    (Some(stored.unwrap_or_else(|| dev.reading(now))), "served")
                }
                ActionKind::Monitor | ActionKind::MonitorPeriodic => (Some(dev.reading(now)), "served"),
                ActionKind::StoreLocally | ActionKind::StoreCloud => (None, "unsupported_action"),
            }
        };
        let mut r = self.finish(tx, data.is_some(), reason);
        r.il_tx = Some(self.il.append(device, LocalTxType::Action(action), Some(r.tx.tx_id)).tx_id);
        r.action = Some(action);
        r.device = Some(device);
        if data.is_some() && action == ActionKind::MonitorPeriodic {
            r.period = self.monitor_periods.get(&device).copied();
        }
        r.data = data;
        r
    }

    fn data_packet(&self, now: SimTime, tx: &MultisigTransaction, accepted: bool) -> Message {
        let payload_len = if accepted { self.config.payload_bytes } else { 0 };
        Message::DataPacket(Box::new(DataPacket { tx: tx.clone(), accepted, payload_len, sent_at: now }))
    }

    pub fn on_message(&mut self, now: SimTime, _from: NodeId, msg: Message) -> Outbox {
        let mut out = Outbox::default();
        match msg {
            Message::TxDeliver { tx, reply_to } => {
                let r = self.handle_overlay_tx(now, tx);
                out.metric(MetricEvent::event(
                    now,
                    self.id,
                    if r.accepted { "lbm_served" } else { "lbm_refused" },
                    Some(reply_to),
                    0.0,
                ));
                // The requester needs the final transaction either way to move its chain on.
                out.unicast(reply_to, self.data_packet(now, &r.tx, r.accepted));
                if let Some(period) = r.period {
                    let device = r.device.expect("periodic responses name a device");
                    self.subscriptions.push(Subscription { to: reply_to, device, tx: r.tx.clone(), period });
                    out.timer(now + period, Timer::Periodic(self.subscriptions.len() as u32 - 1));
                }
                out.unicast(self.obm, Message::TxSubmit { tx: ChainTx::Multisig(r.tx), reply_to: self.id });
                if let Some(deny) = r.deny {
                    out.metric(MetricEvent::event(now, self.id, "lbm_rate_deny", Some(reply_to), 0.0));
                    out.unicast(self.obm, Message::KeyControl(deny));
                }
            }
            Message::DataPacket(p) => {
                if self.on_store_ack(&p.tx) {
                    out.metric(MetricEvent::event(now, self.id, "store_cloud_done", None, p.accepted as u8 as f64));
                }
            }
            _ => {}
        }
        out
    }

    pub fn on_timer(&mut self, now: SimTime, timer: Timer) -> Outbox {
        let mut out = Outbox::default();
        if let Timer::Periodic(i) = timer {
            let Some(s) = self.subscriptions.get(i as usize).cloned() else {
                return out;
            };
            let still_allowed = self.il.policy_check(&Requester::Key(s.tx.requester_pk), ActionKind::MonitorPeriodic, s.device)
                == Decision::Allow;
            if still_allowed {
                if let Some(dev) = self.devices.get_mut(&s.device) {
                    dev.reading(now);
                    self.il.append(s.device, LocalTxType::Action(ActionKind::MonitorPeriodic), Some(s.tx.tx_id));
                    out.unicast(s.to, self.data_packet(now, &s.tx, true));
                    out.timer(now + s.period, Timer::Periodic(i));
                }
            }
        }
        out
    }

    /// Issue a cloud store into the network.
    pub fn store_cloud_out(&mut self, now: SimTime, device: DeviceId, blob: Vec<u8>) -> Outbox {
        let mut out = Outbox::default();
        match self.store_cloud_flow(device, blob) {
            Ok((to, req)) => out.unicast(to, Message::StoreRequest(Box::new(req))),
            Err(_) => out.metric(MetricEvent::event(now, self.id, "store_cloud_refused", None, device.0 as f64)),
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::PolicySubject;
    use crate::rng::stream;
    use crate::smarthome::device::DataSource;

    fn home(policy: Vec<PolicyEntry>) -> LbmState {
        let mut r = stream(9, "lbm-key", 0);
        LbmState::new(NodeId(100), NodeId(0), keygen(&mut r), policy, LbmConfig::default(), stream(9, "lbm", 0))
    }

    fn device(lbm: &LbmState, id: u32) -> Device {
        Device::new(DeviceId(id), ActionKind::ALL, DataSource::default(), &lbm.params, &mut stream(9, "dev", id as u64))
    }

    #[test]
    fn genesis_needs_approval_and_is_unique() {
        let mut h = home(vec![]);
        let d = device(&h, 1);
        assert!(matches!(h.device_genesis(d.clone(), false), Err(SmartHomeError::NotApproved)));
        assert_eq!(h.il.tx_count(), 0);
        h.device_genesis(d.clone(), true).unwrap();
        assert_eq!(h.devices.len(), 1);
        assert!(matches!(h.device_genesis(d, true), Err(SmartHomeError::DuplicateDevice(1))));
    }

    #[test]
    fn rate_threshold_denies_once() {
        let policy = vec![PolicyEntry::new(PolicySubject::Any, ActionKind::Monitor, DeviceId(1))];
        let mut h = home(policy);
        let d = device(&h, 1);
        h.device_genesis(d, true).unwrap();
        let mut r = stream(1, "req", 0);
        let st = RequesterState {
            ledger: crate::ledger::LedgerKind::Multisig,
            active: keygen(&mut r),
            upcoming: keygen(&mut r),
            prev_tx_id: Hash256::ZERO,
            prev_counters: (0, 0),
        };
        let mut denies = 0;
        for k in 0..150u64 {
            let tx = st.request(h.public_key(), &Metadata::new(ActionKind::Monitor, DeviceId(1)), &mut r).unwrap();
            let resp = h.handle_overlay_tx(SimTime(k * 5_000), tx);
            denies += resp.deny.is_some() as usize;
            assert_eq!(resp.accepted, k < 100);
        }
        assert_eq!(denies, 1);
    }
}
