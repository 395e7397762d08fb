use std::collections::{BTreeMap, HashSet};

use lsb::adversary::{fake_transaction, ObmBehavior};
use lsb::crypto::{keygen, Hash256, KeyPair, PublicKey};
use lsb::dtm::DtmConfig;
use lsb::experiments::AppendingBench;
use lsb::ids::{DeviceId, NodeId};
use lsb::ledger::{build_multisig, ActionKind, Block, ChainTx, GenesisTransaction, LedgerKind, MockBurnLedger, RequesterState, TrustRoots};
use lsb::netsim::message::{Message, Out, Outbox, Timer};
use lsb::oracle;
use lsb::overlay::{
    route_transaction, sample_indices, sample_size, BlockReject, BlockVerdict, ComplianceConfig, ComplianceMonitor,
    ConsensusConfig, KeyList, KeyListEntry, KeyRequester, ObmConfig, ObmState, Route, TrustConfig, Verdict,
};
use lsb::rng::stream;
use lsb::time::{SimDuration, SimTime};

const MAX_E2E_MS: u64 = 30;

/// `m` OBMs on a shared bootstrap block of `n` requester geneses, with one
/// complete transaction ready per requester.
struct Fixture {
    obms: Vec<ObmState>,
    txs: Vec<ChainTx>,
    boot: Block,
}

fn fixture(m: usize, n: usize, cp_secs: u64, seed: u64) -> Fixture {
    let mut r = stream(seed, "overlay-fixture", 0);
    let root = keygen(&mut r);
    let keys: Vec<KeyPair> = (0..m).map(|_| keygen(&mut r)).collect();
    let pks: BTreeMap<NodeId, PublicKey> = keys.iter().enumerate().map(|(i, k)| (NodeId(i as u32), k.public())).collect();
    let requestee = keygen(&mut r);
    let mut geneses = Vec::new();
    let mut txs = Vec::new();
    for _ in 0..n {
        let owner = keygen(&mut r);
        let active = keygen(&mut r);
        let g = GenesisTransaction::certified(LedgerKind::Multisig, &owner, &active.public(), &root);
        let st = RequesterState::after_genesis(&g, active, keygen(&mut r)).unwrap();
        geneses.push(ChainTx::Genesis(g));
        txs.push(ChainTx::Multisig(build_multisig(&st, &requestee, ActionKind::Access, DeviceId(1), true, &mut r).unwrap()));
    }
    let boot = Block::new(Hash256::ZERO, NodeId(0), geneses, &keys[0]);
    let max_e2e = SimDuration::from_millis(MAX_E2E_MS);
    let config = ObmConfig {
        consensus: ConsensusConfig::new(10, SimDuration::from_secs(cp_secs), max_e2e),
        trust: TrustConfig::for_obm_count(m),
        dtm: DtmConfig::for_delay(max_e2e, 10, 50),
    };
    let obms = keys
        .into_iter()
        .enumerate()
        .map(|(i, k)| {
            let mut o = ObmState::new(
                NodeId(i as u32),
                k,
                pks.clone(),
                config.clone(),
                TrustRoots::new([root.public()]),
                MockBurnLedger::default(),
                stream(seed, "overlay-obm", i as u64),
            );
            o.install_bootstrap(boot.clone());
            o
        })
        .collect();
    Fixture { obms, txs, boot }
}

fn secs(x: f64) -> SimTime {
    SimTime::from_secs_f64(x)
}

fn announced(out: &Outbox) -> Vec<Block> {
    out.items
        .iter()
        .filter_map(|o| match o {
            Out::BroadcastObms { msg: Message::BlockAnnounce(b) } => Some((**b).clone()),
            _ => None,
        })
        .collect()
}

fn waiting_timer(out: &Outbox) -> Option<(SimTime, Timer)> {
    out.items.iter().find_map(|o| match o {
        Out::Timer { at, timer: t @ Timer::Waiting(_) } => Some((*at, *t)),
        _ => None,
    })
}

#[test]
fn routing_follows_the_key_list() {
    let mut r = stream(1, "route", 0);
    let (a, b, c) = (keygen(&mut r), keygen(&mut r), keygen(&mut r));
    let st_owner = keygen(&mut r);
    let active = keygen(&mut r);
    let g = GenesisTransaction::certified(LedgerKind::Multisig, &st_owner, &active.public(), &a);
    let st = RequesterState::after_genesis(&g, active, keygen(&mut r)).unwrap();
    let tx_to_b = st.request_with_sealed(b.public(), vec![1]);
    let tx_to_c = st.request_with_sealed(c.public(), vec![1]);
    let requester = tx_to_b.requester_pk;
    let members: BTreeMap<PublicKey, NodeId> = [(b.public(), NodeId(20))].into_iter().collect();

    let mut exact = KeyList::default();
    exact.add(KeyListEntry { requester: KeyRequester::Key(requester), requestee: b.public() });
    assert_eq!(route_transaction(&exact, &members, &tx_to_b), Route::Deliver(NodeId(20)));

    let mut open = KeyList::default();
    open.add(KeyListEntry { requester: KeyRequester::Broadcast, requestee: b.public() });
    assert_eq!(route_transaction(&open, &members, &tx_to_b), Route::Deliver(NodeId(20)));

    assert_eq!(route_transaction(&KeyList::default(), &members, &tx_to_b), Route::Drop);
    assert_eq!(route_transaction(&exact, &members, &tx_to_c), Route::Broadcast);
}

#[test]
fn block_timer_rules() {
    let mut f = fixture(2, 10, 10, 2);
    let o = &mut f.obms[0];
    for tx in &f.txs[..9] {
        o.pool.insert(tx.clone(), SimTime::ZERO);
    }
    assert_eq!(o.maybe_start_block(secs(1.0), &mut Outbox::default()), None);
    o.pool.insert(f.txs[9].clone(), SimTime::ZERO);

    o.last_own_block = Some(secs(7.0));
    assert_eq!(o.maybe_start_block(secs(10.0), &mut Outbox::default()), None, "rate-limited");

    let mut f = fixture(2, 10, 600, 2);
    let o = &mut f.obms[0];
    for tx in &f.txs {
        o.pool.insert(tx.clone(), SimTime::ZERO);
    }
    o.last_own_block = Some(secs(100.0));
    let now = secs(800.0);
    let at = o.maybe_start_block(now, &mut Outbox::default()).expect("timer");
    assert!(at > now && at <= now + SimDuration::from_millis(2 * MAX_E2E_MS));
}

#[test]
fn full_pool_makes_a_full_block() {
    let mut f = fixture(2, 10, 10, 3);
    let o = &mut f.obms[0];
    for tx in &f.txs {
        o.pool.insert(tx.clone(), SimTime::ZERO);
    }
    let b = o.generate_block(SimTime::ZERO).unwrap();
    assert_eq!(b.txs.len(), 10);
    assert_eq!(b.header.prev_block_hash, f.boot.hash());
}

#[test]
fn competing_block_cancels_the_wait_and_no_duplicate_is_made() {
    let mut f = fixture(2, 10, 10, 4);
    let (a, b) = f.obms.split_at_mut(1);
    let (a, b) = (&mut a[0], &mut b[0]);
    for tx in &f.txs {
        a.pool.insert(tx.clone(), SimTime::ZERO);
        b.pool.insert(tx.clone(), SimTime::ZERO);
    }
    let mut out_a = Outbox::default();
    let mut out_b = Outbox::default();
    a.maybe_start_block(secs(1.0), &mut out_a);
    b.maybe_start_block(secs(1.0), &mut out_b);
    let (ta, wa) = waiting_timer(&out_a).unwrap();
    let (tb, wb) = waiting_timer(&out_b).unwrap();
    // Whoever's wait ends first generates; the other hears the block before its own expiry.
    let (first, fw, ft, second, sw, st) = if ta <= tb { (a, wa, ta, b, wb, tb) } else { (b, wb, tb, a, wa, ta) };
    let blocks = announced(&first.on_timer(ft, fw));
    assert_eq!(blocks.len(), 1);
    let arrive = ft + SimDuration(1);
    assert!(arrive <= st);
    let before = second.pool.len();
    let v = second.handle_block(arrive, blocks[0].clone(), &mut Outbox::default());
    assert!(matches!(v, BlockVerdict::Accepted(_)), "{v:?}");
    assert_eq!(second.pool.len(), before - 10);
    assert!(announced(&second.on_timer(st, sw)).is_empty());
    assert_eq!(first.replica.tip_hash(), second.replica.tip_hash());
}

#[test]
fn full_verification_always_catches_a_fake() {
    let mut bench = AppendingBench::new(4, 10, 5);
    for run in 0..50 {
        let b = bench.attack_block();
        assert_eq!(bench.detectors(&b, 100, run).len(), 3);
    }
}

#[test]
fn single_verifier_at_ptv20_catches_one_in_five() {
    let exact = oracle::detect_prob(10, 1, 20, 1);
    assert!((exact - 0.2).abs() < 1e-12);
    // Full block checks through the verifier.
    let mut bench = AppendingBench::new(2, 10, 6);
    let b = bench.attack_block();
    let trials = 20_000u32;
    let hits = (0..trials).filter(|run| !bench.detectors(&b, 20, *run).is_empty()).count();
    let p = hits as f64 / trials as f64;
    let se = (exact * (1.0 - exact) / trials as f64).sqrt();
    assert!((p - exact).abs() < 4.0 * se, "rate {p}");
    // The sampling draw alone, at 10^5 trials.
    let trials = 100_000u64;
    let mut hits = 0;
    for t in 0..trials {
        let mut r = stream(7, "sample-only", t);
        if sample_indices(10, sample_size(20, 10), &mut r).contains(&3) {
            hits += 1;
        }
    }
    let p = hits as f64 / trials as f64;
    let se = (exact * (1.0 - exact) / trials as f64).sqrt();
    assert!((p - exact).abs() < 4.0 * se, "rate {p}");
}

#[test]
fn rejected_blocks_never_raise_trust() {
    let mut f = fixture(3, 10, 10, 8);
    let (a, rest) = f.obms.split_at_mut(1);
    let a = &mut a[0];
    for tx in &f.txs {
        a.pool.insert(tx.clone(), SimTime::ZERO);
    }
    a.behavior = ObmBehavior::Appending { fakes_per_block: 1, fake: lsb::adversary::FakeKind::PkLink };
    let bad = a.generate_block(SimTime::ZERO).unwrap();
    for v in rest.iter_mut() {
        let before = v.trust.direct(NodeId(0)).unwrap_or(0);
        let verdict = v.handle_block(secs(1.0), bad.clone(), &mut Outbox::default());
        assert!(matches!(verdict, BlockVerdict::Rejected(BlockReject::BadTransaction { .. })), "{verdict:?}");
        assert!(v.trust.direct(NodeId(0)).unwrap_or(0) <= before);
    }
}

#[test]
fn fake_transactions_are_well_formed_but_unchained() {
    let f = fixture(2, 1, 10, 9);
    let fake = fake_transaction(&f.boot.txs[0], &mut stream(9, "fake", 0));
    assert_eq!(fake.tx_id, fake.compute_id());
    assert!(fake.is_complete());
}

#[test]
fn compliance_boundaries() {
    let cfg = ComplianceConfig::default();
    let cp = SimDuration::from_secs(10);
    let mw = SimDuration::from_millis(2 * MAX_E2E_MS);
    let g = NodeId(3);
    let mut m = ComplianceMonitor::default();
    assert_eq!(m.police(&cfg, g, secs(50.0), cp, None, mw), Verdict::Compliant);
    assert_eq!(m.police(&cfg, g, secs(54.0), cp, None, mw), Verdict::TooSoon);
    assert_eq!(m.police(&cfg, g, secs(60.0), cp, None, mw), Verdict::Compliant);

    // Five blocks, each produced almost at once after the pool filled.
    let mut m = ComplianceMonitor::default();
    let early = Some(SimDuration(mw.0 / 200));
    let verdicts: Vec<Verdict> = (0..5).map(|i| m.police(&cfg, g, secs(10.0 * i as f64), cp, early, mw)).collect();
    assert_eq!(&verdicts[..3], &[Verdict::Compliant; 3]);
    assert!(verdicts[3..].contains(&Verdict::TooManyEarly));
}

#[test]
fn sampling_is_uniform_and_distinct() {
    let mut counts = [0u32; 10];
    for t in 0..20_000u64 {
        let s = sample_indices(10, 3, &mut stream(11, "uniform", t));
        let set: HashSet<usize> = s.iter().copied().collect();
        assert_eq!(set.len(), 3);
        for i in s {
            counts[i] += 1;
        }
    }
    // Each index appears in 3/10 of draws: 6000 expected, sd about 65.
    for c in counts {
        assert!((c as i64 - 6000).abs() < 400, "{counts:?}");
    }
}
