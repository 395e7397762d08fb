//! One home: device registration, a key grant between two devices, a local
//! store, and an overlay request served under the policy header.

use lsb::crypto::keygen;
use lsb::ids::{DeviceId, NodeId};
use lsb::ledger::{ActionKind, GenesisTransaction, LedgerKind, Metadata, PolicyEntry, PolicySubject, RequesterState};
use lsb::rng::stream;
use lsb::smarthome::{DataSource, Device, LbmConfig, LbmState, STORAGE};
use lsb::time::SimTime;

fn main() {
    let mut r = stream(2, "example-home", 0);
    let (thermo, heater) = (DeviceId(1), DeviceId(2));
    let policy = vec![
        PolicyEntry::new(PolicySubject::Any, ActionKind::Monitor, thermo),
        PolicyEntry::new(PolicySubject::Device(thermo), ActionKind::StoreLocally, thermo),
    ];
    let mut lbm = LbmState::new(NodeId(20), NodeId(0), keygen(&mut r), policy, LbmConfig::default(), stream(2, "lbm", 0));

    let t = Device::new(thermo, [ActionKind::Monitor, ActionKind::StoreLocally], DataSource::Periodic { period: 60.0, amplitude: 3.0 }, &lbm.params, &mut r);
    let h = Device::new(heater, [ActionKind::Access], DataSource::default(), &lbm.params, &mut r);
    lbm.device_genesis(t, true).expect("new device");
    println!("heater without approval: {:?}", lbm.device_genesis(h.clone(), false).err());
    lbm.device_genesis(h, true).expect("approved now");

    lbm.grant_shared_key(thermo, heater, true).expect("both registered");
    let msg = lbm.devices[&thermo].seal_for(heater, b"too cold", &mut r).expect("granted");
    println!("thermostat -> heater: {:?}", lbm.deliver_local(thermo, heater, &msg).map(|b| String::from_utf8_lossy(&b).into_owned()));

    lbm.grant_shared_key(thermo, STORAGE, true).expect("storage grant");
    let rec = lbm.device_store_local(SimTime::from_secs_f64(5.0), thermo, b"18.2C").expect("allowed");
    println!("stored {} bytes, intact {}", rec.blob.len(), rec.intact());

    let root = keygen(&mut r);
    let (owner, active) = (keygen(&mut r), keygen(&mut r));
    let g = GenesisTransaction::certified(LedgerKind::Multisig, &owner, &active.public(), &root);
    let visitor = RequesterState::after_genesis(&g, active, keygen(&mut r)).expect("genesis commits to the key");
    for (action, device) in [(ActionKind::Monitor, thermo), (ActionKind::Access, heater)] {
        let tx = visitor.request(lbm.public_key(), &Metadata::new(action, device), &mut r).expect("fresh keys");
        let resp = lbm.handle_overlay_tx(SimTime::from_secs_f64(10.0), tx);
        println!("{action:?} on device {}: {} ({})", device.0, if resp.accepted { "served" } else { "refused" }, resp.reason);
    }
    println!("local ledger: {} transactions, links ok {:?}", lbm.il.tx_count(), lbm.il.validate_links());
}
