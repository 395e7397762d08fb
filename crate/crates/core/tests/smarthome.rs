use proptest::prelude::*;

use lsb::crypto::{encrypt, hash, keygen, KeyPair, SymmetricKey};
use lsb::error::SmartHomeError;
use lsb::ids::{DeviceId, NodeId};
use lsb::ledger::{
    check_transaction, ActionKind, ChainTx, GenesisTransaction, LedgerKind, Metadata, PolicyEntry, PolicySubject,
    RequesterState, TxIndex,
};
use lsb::netsim::message::Out;
use lsb::rng::{stream, SimRng};
use lsb::smarthome::{CloudAccount, CloudStorage, DataSource, Device, LbmConfig, LbmState, STORAGE};
use lsb::time::SimTime;

const LIGHT: DeviceId = DeviceId(1);
const MOTION: DeviceId = DeviceId(2);

struct Home {
    lbm: LbmState,
    root: KeyPair,
    r: SimRng,
}

fn allow(subject: PolicySubject, action: ActionKind, d: DeviceId) -> PolicyEntry {
    PolicyEntry::new(subject, action, d)
}

fn home(policy: Vec<PolicyEntry>) -> Home {
    let mut r = stream(21, "home", 0);
    let root = keygen(&mut r);
    let mut lbm = LbmState::new(NodeId(30), NodeId(0), keygen(&mut r), policy, LbmConfig::default(), stream(21, "lbm", 0));
    for (id, caps) in [(LIGHT, vec![ActionKind::Access, ActionKind::StoreLocally, ActionKind::StoreCloud]), (MOTION, vec![ActionKind::Monitor])] {
        let dev = Device::new(id, caps, DataSource::default(), &lbm.params, &mut r);
        lbm.device_genesis(dev, true).unwrap();
    }
    Home { lbm, root, r }
}

/// Requester chain position right after a certified genesis, plus an index holding that genesis.
fn requester(h: &mut Home, ledger: LedgerKind) -> (RequesterState, TxIndex) {
    let (owner, active) = (keygen(&mut h.r), keygen(&mut h.r));
    let g = GenesisTransaction::certified(ledger, &owner, &active.public(), &h.root);
    let st = RequesterState::after_genesis(&g, active, keygen(&mut h.r)).unwrap();
    let mut idx = TxIndex::default();
    idx.insert(ChainTx::Genesis(g));
    (st, idx)
}

#[test]
fn device_registration() {
    let mut h = home(vec![]);
    let before = (h.lbm.il.tx_count(), h.lbm.devices.len());
    let dev = Device::new(DeviceId(7), [ActionKind::Monitor], DataSource::QueryBased, &h.lbm.params, &mut h.r);
    assert!(matches!(h.lbm.device_genesis(dev.clone(), false), Err(SmartHomeError::NotApproved)));
    assert_eq!((h.lbm.il.tx_count(), h.lbm.devices.len()), before);
    h.lbm.device_genesis(dev.clone(), true).unwrap();
    assert_eq!((h.lbm.il.tx_count(), h.lbm.devices.len()), (before.0 + 1, before.1 + 1));
    assert!(h.lbm.devices[&DeviceId(7)].shared_key_with_lbm.is_some());
    assert!(matches!(h.lbm.device_genesis(dev, true), Err(SmartHomeError::DuplicateDevice(7))));
}

#[test]
fn shared_keys_and_revocation() {
    let mut h = home(vec![]);
    assert!(matches!(h.lbm.grant_shared_key(LIGHT, MOTION, false), Err(SmartHomeError::NotApproved)));
    let key = h.lbm.grant_shared_key(LIGHT, MOTION, true).unwrap();
    assert_eq!(h.lbm.devices[&LIGHT].key_for(MOTION), Some(&key));
    assert_eq!(h.lbm.devices[&MOTION].key_for(LIGHT), Some(&key));
    let ct = h.lbm.devices[&LIGHT].seal_for(MOTION, b"motion?", &mut h.r).unwrap();
    assert_eq!(h.lbm.deliver_local(LIGHT, MOTION, &ct).unwrap(), b"motion?");
    let notices = h.lbm.revoke_shared_key(LIGHT, MOTION).unwrap();
    assert_eq!(notices.len(), 2);
    assert!(h.lbm.devices[&LIGHT].key_for(MOTION).is_none());
    let stale = encrypt(&key, b"after revoke", &mut h.r);
    assert!(matches!(h.lbm.deliver_local(LIGHT, MOTION, &stale), Err(SmartHomeError::NoKeyGrant)));
    let fresh = h.lbm.grant_shared_key(LIGHT, MOTION, true).unwrap();
    assert_ne!(fresh, key);
    assert!(matches!(h.lbm.deliver_local(LIGHT, MOTION, &stale), Err(SmartHomeError::Unauthenticated)));
}

#[test]
fn overlay_requests_follow_the_policy() {
    let mut h = home(vec![allow(PolicySubject::Any, ActionKind::Access, LIGHT)]);
    let (st, idx) = requester(&mut h, LedgerKind::Multisig);
    let lbm_pk = h.lbm.public_key();

    let tx = st.request(lbm_pk, &Metadata::new(ActionKind::Access, LIGHT), &mut h.r).unwrap();
    let il_before = h.lbm.il.tx_count();
    let resp = h.lbm.handle_overlay_tx(SimTime::ZERO, tx);
    assert!(resp.accepted && resp.data.is_some());
    assert_eq!((resp.tx.output.accepted, resp.tx.output.rejected), (1, 0));
    assert_eq!(check_transaction(&resp.tx, &idx), Ok(()));
    assert_eq!(h.lbm.il.tx_count(), il_before + 1);
    assert_eq!(h.lbm.il.transactions().last().unwrap().overlay_tx_hash, Some(resp.tx.tx_id));

    let tx = st.request(lbm_pk, &Metadata::new(ActionKind::Monitor, MOTION), &mut h.r).unwrap();
    let resp = h.lbm.handle_overlay_tx(SimTime::ZERO, tx);
    assert!(!resp.accepted && resp.data.is_none());
    assert_eq!((resp.tx.output.accepted, resp.tx.output.rejected), (0, 1));
    assert_eq!(check_transaction(&resp.tx, &idx), Ok(()));

    let tx = st.request(lbm_pk, &Metadata::new(ActionKind::Access, DeviceId(99)), &mut h.r).unwrap();
    let resp = h.lbm.handle_overlay_tx(SimTime::ZERO, tx);
    assert!(!resp.accepted);
    assert_eq!(resp.reason, "unknown_device");
}

fn with_cloud(policy: Vec<PolicyEntry>) -> (Home, CloudStorage) {
    let mut h = home(policy);
    let (st, _) = requester(&mut h, LedgerKind::Multisig);
    h.lbm.attach_overlay(Some(st), None);
    let cloud = CloudStorage::new(NodeId(40), NodeId(0), keygen(&mut h.r));
    h.lbm.set_cloud(CloudAccount { cloud_pk: cloud.public_key(), cloud_node: NodeId(40), cloud_obm: NodeId(0) });
    (h, cloud)
}

#[test]
fn cloud_store_commits_the_blob_hash() {
    let (mut h, mut cloud) = with_cloud(vec![allow(PolicySubject::Device(LIGHT), ActionKind::StoreCloud, LIGHT)]);
    let blob = b"reading 21.5".to_vec();
    let (to, req) = h.lbm.store_cloud_flow(LIGHT, blob.clone()).unwrap();
    assert_eq!(to, NodeId(40));
    let (tx, ok) = cloud.handle_store(SimTime::ZERO, &req);
    assert!(ok && tx.is_complete());
    assert_eq!(Metadata::open(&tx.metadata, &cloud.key).unwrap().data_hash, Some(hash(&blob)));
    assert!(h.lbm.on_store_ack(&tx));
    assert_eq!(h.lbm.verify_cloud_copy(&tx.tx_id, &cloud.records(&req.credential)[0].blob), Some(true));

    assert!(cloud.tamper(&req.credential, 0, b"reading 99.9".to_vec()));
    let stored = &cloud.records(&req.credential)[0];
    assert!(!stored.intact());
    assert_eq!(h.lbm.verify_cloud_copy(&tx.tx_id, &stored.blob), Some(false));
}

#[test]
fn denied_cloud_store_sends_nothing() {
    let (mut h, _) = with_cloud(vec![]);
    assert!(matches!(h.lbm.store_cloud_flow(LIGHT, b"x".to_vec()), Err(SmartHomeError::PolicyDenied)));
    let out = h.lbm.store_cloud_out(SimTime::ZERO, LIGHT, b"x".to_vec());
    assert!(out.items.iter().all(|o| matches!(o, Out::Metric(_))));
}

#[test]
fn local_store_chains_per_device() {
    let mut h = home(vec![allow(PolicySubject::Device(LIGHT), ActionKind::StoreLocally, LIGHT)]);
    assert!(matches!(h.lbm.device_store_local(SimTime::ZERO, LIGHT, b"a"), Err(SmartHomeError::NoKeyGrant)));
    h.lbm.grant_shared_key(LIGHT, STORAGE, true).unwrap();
    let (txs, recs) = (h.lbm.il.tx_count(), h.lbm.storage.records().len());
    h.lbm.device_store_local(SimTime::ZERO, LIGHT, b"a").unwrap();
    assert_eq!((h.lbm.il.tx_count(), h.lbm.storage.records().len()), (txs + 1, recs + 1));
    let first = h.lbm.il.transactions().last().unwrap().tx_id;
    h.lbm.device_store_local(SimTime(1), LIGHT, b"b").unwrap();
    assert_eq!(h.lbm.il.transactions().last().unwrap().prev_tx_ptr, Some(first));
    assert_eq!(h.lbm.il.validate_links(), Ok(()));

    let wrong = encrypt(&SymmetricKey([7; 32]), b"c", &mut h.r);
    assert!(matches!(h.lbm.store_local(SimTime(2), LIGHT, &wrong), Err(SmartHomeError::Unauthenticated)));
    assert_eq!(h.lbm.storage.records().len(), recs + 2);
}

#[test]
fn anchors_track_the_ledger() {
    let mut h = home(vec![]);
    let (st, _) = requester(&mut h, LedgerKind::SingleSig);
    h.lbm.attach_overlay(None, Some(st));
    let a = h.lbm.anchor_il().unwrap();
    let b = h.lbm.anchor_il().unwrap();
    assert_eq!(a.payload, b.payload);
    assert_eq!(b.prev_tx_id, a.tx_id);
    h.lbm.grant_shared_key(LIGHT, MOTION, true).unwrap();
    let c = h.lbm.anchor_il().unwrap();
    assert_ne!(c.payload, b.payload);
    h.lbm.il.blocks_mut()[0].txs[0].device_id = DeviceId(55);
    assert_ne!(h.lbm.il.digest(), c.payload);
}

proptest! {
    #[test]
    fn ungranted_devices_are_never_heard(bytes in proptest::collection::vec(any::<u8>(), 0..96), seed in any::<u64>()) {
        let mut h = home(vec![allow(PolicySubject::Any, ActionKind::StoreLocally, LIGHT)]);
        let key = h.lbm.devices[&LIGHT].shared_key_with_lbm.unwrap();
        let sealed = encrypt(&key, &bytes, &mut stream(seed, "p", 0));
        for ct in [&bytes, &sealed] {
            prop_assert!(h.lbm.deliver_local(LIGHT, MOTION, ct).is_err());
            prop_assert!(h.lbm.store_local(SimTime::ZERO, LIGHT, ct).is_err());
        }
        prop_assert_eq!(h.lbm.local_accepted, 0);
        prop_assert!(h.lbm.storage.records().is_empty());
    }
}
