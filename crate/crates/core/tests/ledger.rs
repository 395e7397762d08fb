use proptest::prelude::*;

use lsb::crypto::{hash, keygen, Hash256, KeyPair};
use lsb::ids::{DeviceId, NodeId};
use lsb::ledger::dump::dump_chain;
use lsb::ledger::{
    build_multisig, check_transaction, policy_check, verify_genesis, ActionKind, Block, ChainTx, Decision,
    GenesisTransaction, LedgerKind, LocalIl, MockBurnLedger, MultisigTransaction, PolicyEntry, PolicySubject,
    PublicChain, Requester, RequesterState, TrustRoots, TxIndex, TxRejection,
};
use lsb::rng::{stream, SimRng};

struct Chain {
    index: TxIndex,
    state: RequesterState,
    requestee: KeyPair,
    rng: SimRng,
    txs: Vec<MultisigTransaction>,
}

impl Chain {
    fn new(seed: u64) -> Self {
        let mut rng = stream(seed, "ledger-test", 0);
        let root = keygen(&mut rng);
        let owner = keygen(&mut rng);
        let active = keygen(&mut rng);
        let g = GenesisTransaction::certified(LedgerKind::Multisig, &owner, &active.public(), &root);
        let state = RequesterState::after_genesis(&g, active, keygen(&mut rng)).unwrap();
        let mut index = TxIndex::default();
        index.insert(ChainTx::Genesis(g));
        let requestee = keygen(&mut rng);
        Chain { index, state, requestee, rng, txs: Vec::new() }
    }

    fn next(&mut self, accept: bool) -> MultisigTransaction {
        build_multisig(&self.state, &self.requestee, ActionKind::Access, DeviceId(7), accept, &mut self.rng).unwrap()
    }

    fn push(&mut self, accept: bool) -> MultisigTransaction {
        let tx = self.next(accept);
        check_transaction(&tx, &self.index).unwrap();
        self.index.insert(ChainTx::Multisig(tx.clone()));
        self.state.commit(&ChainTx::Multisig(tx.clone()), &mut self.rng);
        self.txs.push(tx.clone());
        tx
    }

    fn counters(&self) -> (u64, u64) {
        self.state.prev_counters
    }
}

#[test]
fn counters_step_by_one() {
    let mut c = Chain::new(1);
    let first = c.next(true);
    assert_eq!((first.output.accepted, first.output.rejected), (1, 0));
    let first = c.next(false);
    assert_eq!((first.output.accepted, first.output.rejected), (0, 1));
    for a in [true, true, false, true] {
        c.push(a);
    }
    assert_eq!(c.counters(), (3, 1));
    let yes = c.next(true);
    assert_eq!((yes.output.accepted, yes.output.rejected), (4, 1));
    let no = c.next(false);
    assert_eq!((no.output.accepted, no.output.rejected), (3, 2));
}

#[test]
fn honest_transaction_verifies() {
    let mut c = Chain::new(2);
    let tx = c.next(true);
    assert_eq!(check_transaction(&tx, &c.index), Ok(()));
}

#[test]
fn foreign_key_is_rejected() {
    let mut c = Chain::new(3);
    let mut tx = c.next(true);
    tx.requester_pk = keygen(&mut stream(3, "other", 0)).public();
    tx.refresh_id();
    assert_eq!(check_transaction(&tx, &c.index), Err(TxRejection::PkHashMismatch));
}

#[test]
fn double_step_is_rejected() {
    let mut c = Chain::new(4);
    for a in [true, true, false, true] {
        c.push(a);
    }
    let mut tx = c.next(true);
    tx.output.accepted += 1;
    tx.refresh_id();
    assert_eq!((tx.output.accepted, tx.output.rejected), (5, 1));
    assert_eq!(check_transaction(&tx, &c.index), Err(TxRejection::BadOutputDelta));
}

#[test]
fn missing_previous_is_unchained() {
    let mut c = Chain::new(5);
    let mut tx = c.next(true);
    tx.prev_tx_id = hash(b"nowhere");
    tx.refresh_id();
    assert_eq!(check_transaction(&tx, &c.index), Err(TxRejection::Unchained));
}

#[test]
fn spent_commitment_cannot_fork() {
    let mut c = Chain::new(6);
    let a = c.next(true);
    let b = c.next(false);
    c.index.insert(ChainTx::Multisig(a));
    assert_eq!(check_transaction(&b, &c.index), Err(TxRejection::CommitmentSpent));
}

#[test]
fn genesis_proofs() {
    let mut r = stream(7, "genesis", 0);
    let (root, owner, next, stranger) = (keygen(&mut r), keygen(&mut r), keygen(&mut r), keygen(&mut r));
    let roots = TrustRoots::new([root.public()]);
    let burns = MockBurnLedger::default();
    let cert = GenesisTransaction::certified(LedgerKind::Multisig, &owner, &next.public(), &root);
    assert!(verify_genesis(&cert, &roots, &burns));
    assert!(!verify_genesis(&cert, &TrustRoots::new([stranger.public()]), &burns));
    let forged = GenesisTransaction::certified(LedgerKind::Multisig, &owner, &next.public(), &stranger);
    assert!(!verify_genesis(&forged, &roots, &burns));

    let addr = hash(b"burn-address");
    let burned = GenesisTransaction::burned(LedgerKind::SingleSig, &owner, &next.public(), addr);
    assert!(!verify_genesis(&burned, &roots, &burns));
    let mut ok = MockBurnLedger::default();
    ok.record(addr, owner.public());
    assert!(verify_genesis(&burned, &roots, &ok));
    let mut wrong = MockBurnLedger::default();
    wrong.record(addr, stranger.public());
    assert!(!verify_genesis(&burned, &roots, &wrong));
}

#[test]
fn ledgers_do_not_mix() {
    let mut r = stream(8, "mix", 0);
    let (root, owner, active, up) = (keygen(&mut r), keygen(&mut r), keygen(&mut r), keygen(&mut r));
    let g = GenesisTransaction::certified(LedgerKind::SingleSig, &owner, &active.public(), &root);
    let mut idx = TxIndex::default();
    idx.insert(ChainTx::Genesis(g.clone()));
    let mut st = RequesterState::after_genesis(&g, active, up).unwrap();
    st.ledger = LedgerKind::Multisig;
    let tx = build_multisig(&st, &keygen(&mut r), ActionKind::StoreCloud, DeviceId(1), true, &mut r).unwrap();
    assert_eq!(check_transaction(&tx, &idx), Err(TxRejection::WrongLedger));
}

fn blocks(n: usize) -> Vec<Block> {
    let key = keygen(&mut stream(9, "gen", 0));
    let mut c = Chain::new(9);
    let mut out: Vec<Block> = Vec::new();
    for i in 0..n {
        let prev = out.last().map(|b| b.hash()).unwrap_or(Hash256::ZERO);
        let tx = c.push(i % 2 == 0);
        out.push(Block::new(prev, NodeId(i as u32 % 3), vec![ChainTx::Multisig(tx)], &key));
    }
    out
}

#[test]
fn append_checks_the_link() {
    let bs = blocks(2);
    let mut chain = PublicChain::new();
    assert!(chain.append_block(bs[1].clone()).is_err());
    assert_eq!(chain.len(), 0);
    chain.append_block(bs[0].clone()).unwrap();
    assert_eq!(chain.len(), 1);
    assert!(chain.append_block(bs[0].clone()).is_err());
    assert_eq!(chain.len(), 1);
}

#[test]
fn tampering_breaks_the_next_link() {
    let mut chain = PublicChain::new();
    for b in blocks(5) {
        chain.append_block(b).unwrap();
    }
    assert_eq!(chain.validate_links(), Ok(()));
    if let ChainTx::Multisig(tx) = &mut chain.blocks_mut()[2].txs[0] {
        tx.metadata[0] ^= 1;
    }
    assert_eq!(chain.validate_links(), Err(3));
}

#[test]
fn tampered_tip_is_reported_at_length() {
    let mut chain = PublicChain::new();
    for b in blocks(3) {
        chain.append_block(b).unwrap();
    }
    if let ChainTx::Multisig(tx) = &mut chain.blocks_mut()[2].txs[0] {
        tx.metadata[0] ^= 1;
    }
    assert_eq!(chain.validate_links(), Err(3));
}

#[test]
fn verifier_signatures_leave_the_hash_alone() {
    let mut b = blocks(1).remove(0);
    let h = b.hash();
    let k = keygen(&mut stream(1, "v", 0));
    b.add_verifier_sig(NodeId(4), k.sign(b"x"));
    assert_eq!(b.hash(), h);
    assert_eq!(Block::from_bytes(&b.to_bytes()).unwrap(), b);
}

#[test]
fn truncate_restores_the_index() {
    let bs = blocks(4);
    let mut full = PublicChain::new();
    let mut half = PublicChain::new();
    for (i, b) in bs.iter().enumerate() {
        full.append_block(b.clone()).unwrap();
        if i < 2 {
            half.append_block(b.clone()).unwrap();
        }
    }
    let dropped = full.truncate(2);
    assert_eq!(dropped, bs[2..].to_vec());
    assert_eq!(dump_chain(&full), dump_chain(&half));
    for b in &bs[2..] {
        full.append_block(b.clone()).unwrap();
    }
    assert_eq!(full.len(), 4);
}

#[test]
fn policy_lookup() {
    let sp = keygen(&mut stream(10, "sp", 0)).public();
    let other = keygen(&mut stream(10, "other", 0)).public();
    let thermostat = DeviceId(3);
    let il = LocalIl::new(vec![PolicyEntry::new(PolicySubject::Key(sp), ActionKind::Access, thermostat)], 10);
    assert_eq!(policy_check(&il, &Requester::Key(sp), ActionKind::Access, thermostat), Decision::Allow);
    assert_eq!(policy_check(&il, &Requester::Key(sp), ActionKind::Monitor, thermostat), Decision::Deny);
    assert_eq!(policy_check(&il, &Requester::Key(other), ActionKind::Access, thermostat), Decision::Deny);
    let open = LocalIl::new(vec![PolicyEntry::new(PolicySubject::Any, ActionKind::Access, thermostat)], 10);
    assert_eq!(policy_check(&open, &Requester::Key(other), ActionKind::Access, thermostat), Decision::Allow);
    assert_eq!(policy_check(&open, &Requester::Device(DeviceId(9)), ActionKind::Access, thermostat), Decision::Allow);
}

#[derive(Clone, Copy, Debug)]
enum Field {
    RequesterPk,
    RequesterSig,
    RequesteeSig,
    Accepted,
    Rejected,
    NextPkHash,
}

fn mutate(tx: &MultisigTransaction, f: Field, stranger: &KeyPair) -> MultisigTransaction {
    let mut m = tx.clone();
    match f {
        Field::RequesterPk => m.requester_pk = stranger.public(),
        Field::RequesterSig => m.requester_sig.0[10] ^= 0x40,
        Field::RequesteeSig => {
            if let Some(s) = m.requestee_sig.as_mut() {
                s.0[10] ^= 0x40;
            }
        }
        Field::Accepted => m.output.accepted += 1,
        Field::Rejected => m.output.rejected += 1,
        Field::NextPkHash => m.output.next_pk_hash = stranger.public().hash(),
    }
    m.refresh_id();
    m
}

fn field() -> impl Strategy<Value = Field> {
    prop_oneof![
        Just(Field::RequesterPk),
        Just(Field::RequesterSig),
        Just(Field::RequesteeSig),
        Just(Field::Accepted),
        Just(Field::Rejected),
        Just(Field::NextPkHash),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn chains_replay_and_single_mutants_fail(
        seed in any::<u64>(),
        accepts in proptest::collection::vec(any::<bool>(), 1..200),
        pos in any::<prop::sample::Index>(),
        f in field(),
    ) {
        let mut c = Chain::new(seed);
        for a in &accepts {
            c.push(*a);
        }
        let n_acc = accepts.iter().filter(|a| **a).count() as u64;
        prop_assert_eq!(c.counters(), (n_acc, accepts.len() as u64 - n_acc));

        // Replay from scratch against a fresh index.
        let mut replay = Chain::new(seed);
        let mut idx = std::mem::take(&mut replay.index);
        let i = pos.index(c.txs.len());
        for (j, tx) in c.txs.iter().enumerate() {
            if j == i {
                let stranger = keygen(&mut stream(seed, "stranger", 0));
                let m = mutate(tx, f, &stranger);
                prop_assert!(check_transaction(&m, &idx).is_err(), "{:?} survived at {}", f, i);
            }
            prop_assert_eq!(check_transaction(tx, &idx), Ok(()));
            let (a, r) = (tx.output.accepted, tx.output.rejected);
            prop_assert_eq!(a + r, j as u64 + 1);
            idx.insert(ChainTx::Multisig(tx.clone()));
        }
    }
}
