//! A requester's chain of dual-signed transactions, checked link by link, and
//! what happens when one of them is tampered with.

use lsb::crypto::keygen;
use lsb::ids::DeviceId;
use lsb::ledger::{
    build_multisig, check_transaction, ActionKind, ChainTx, GenesisTransaction, LedgerKind, RequesterState, TxIndex,
};
use lsb::rng::stream;

fn main() {
    let mut r = stream(1, "example-chain", 0);
    let (root, owner, active) = (keygen(&mut r), keygen(&mut r), keygen(&mut r));
    let genesis = GenesisTransaction::certified(LedgerKind::Multisig, &owner, &active.public(), &root);
    let mut st = RequesterState::after_genesis(&genesis, active, keygen(&mut r)).expect("genesis commits to the key");
    let mut idx = TxIndex::default();
    idx.insert(ChainTx::Genesis(genesis));

    let lamp = keygen(&mut r);
    for i in 0..5 {
        let accept = i != 3;
        let tx = build_multisig(&st, &lamp, ActionKind::Access, DeviceId(1), accept, &mut r).expect("fresh keys");
        println!(
            "tx {i}: output ({}, {}) -> {:?}",
            tx.output.accepted,
            tx.output.rejected,
            check_transaction(&tx, &idx)
        );
        let done = ChainTx::Multisig(tx);
        st.commit(&done, &mut r);
        idx.insert(done);
    }

    let mut forged = build_multisig(&st, &lamp, ActionKind::Access, DeviceId(1), true, &mut r).expect("fresh keys");
    forged.output.accepted += 5;
    forged.refresh_id();
    println!("inflated output: {:?}", check_transaction(&forged, &idx));

    let stranger = keygen(&mut r);
    let mut hijack = build_multisig(&st, &lamp, ActionKind::Access, DeviceId(1), true, &mut r).expect("fresh keys");
    hijack.requester_pk = stranger.public();
    hijack.refresh_id();
    println!("foreign key: {:?}", check_transaction(&hijack, &idx));
}
