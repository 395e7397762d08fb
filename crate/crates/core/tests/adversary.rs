use std::collections::BTreeMap;

use lsb::adversary::{inflate_reputation, AttackKind, AttackScript};
use lsb::crypto::keygen;
use lsb::experiments::attacks::{
    appending_trials, forge_against_quiet, home_attack_rows, success_rate, AppendingBench, PTV_GRID,
};
use lsb::experiments::network::{burst, burst_scenario, single_burst};
use lsb::ledger::{check_transaction, ChainTx, GenesisTransaction, LedgerKind, RequesterState, TxIndex, TxRejection};
use lsb::oracle::detect_prob;
use lsb::rng::stream;
use lsb::scenario::{run, Scenario, World};

#[test]
fn full_verification_always_catches_the_fake() {
    for m in [3, 5, 13] {
        let (row, _) = success_rate(m, 100, 10, 1);
        assert_eq!(row.success_pct, 0.0, "m {m}");
    }
}

#[test]
fn five_obms_at_sixty_rarely_miss() {
    // Four honest verifiers each miss with probability 0.4, so a run slips
    // through with probability 0.0256. Three misses in ten would be a 1-in-5000 event.
    let p = 1.0 - detect_prob(10, 1, 60, 4);
    assert!((p - 0.0256).abs() < 1e-12);
    let (row, _) = success_rate(5, 60, 10, 1);
    assert!(row.success_pct <= 20.0, "{row:?}");
}

#[test]
fn five_obms_at_twenty_match_the_miss_probability() {
    let runs = 10_000;
    let (row, _) = success_rate(5, 20, runs, 2);
    let p = 1.0 - detect_prob(10, 1, 20, 4);
    assert!((p - 0.8f64.powi(4)).abs() < 1e-12);
    let se = (p * (1.0 - p) / runs as f64).sqrt();
    let got = row.success_pct / 100.0;
    assert!(got > 0.0);
    assert!((got - p).abs() <= 4.0 * se, "got {got} want {p} se {se}");
}

#[test]
fn success_never_rises_with_ptv() {
    let mut bench = AppendingBench::new(5, 10, 3);
    let blocks: Vec<_> = (0..50).map(|_| bench.attack_block()).collect();
    let mut prev = usize::MAX;
    for ptv in PTV_GRID {
        let missed = appending_trials(&mut bench, &blocks, ptv, "mono").iter().filter(|r| !r.detected).count();
        assert!(missed <= prev, "ptv {ptv}");
        prev = missed;
    }
    assert_eq!(prev, 0);
}

#[test]
fn miss_probability_falls_with_more_verifiers() {
    for ptv in PTV_GRID {
        let ps: Vec<f64> = (1..20).map(|v| 1.0 - detect_prob(10, 1, ptv, v)).collect();
        assert!(ps.windows(2).all(|w| w[1] <= w[0]), "ptv {ptv}");
    }
}

#[test]
fn one_burst_costs_two_blocks_and_two_trust() {
    let rows = single_burst(1).unwrap();
    assert_eq!(rows.len(), 12);
    for r in rows {
        assert_eq!(r.surplus_blocks, 2);
        assert_eq!(r.dropped, 2, "{r:?}");
        assert_eq!(r.trust_decrements, 2, "{r:?}");
    }
}

#[test]
fn honest_runs_reject_nothing() {
    for r in burst(1, false).unwrap() {
        assert_eq!((r.surplus_blocks, r.dropped, r.trust_decrements), (0, 0, 0));
    }
    let out = run(&Scenario { horizon: 40.0, ..Scenario::default() }).unwrap();
    assert!(out.metrics.blocks.iter().all(|b| b.event != "rejected"));
    assert!(out.metrics.trust.iter().all(|t| t.delta >= 0));
}

#[test]
fn sustained_bursts_drive_ptv_to_full() {
    let s = burst_scenario(1, true);
    let w = World::build(&s).unwrap();
    let attacker = w.layout.obms[0].0;
    let out = w.run();
    let mut last: BTreeMap<u32, u32> = BTreeMap::new();
    for v in out.metrics.verification.iter().filter(|v| v.generator == attacker && v.observer != attacker) {
        last.insert(v.observer, v.ptv);
    }
    assert_eq!(last.len(), 12);
    assert!(last.values().all(|p| *p == 100), "{last:?}");
}

#[test]
fn inflated_outputs_fail_validation() {
    let mut r = stream(8, "inflate", 0);
    let (root, owner, active) = (keygen(&mut r), keygen(&mut r), keygen(&mut r));
    let g = GenesisTransaction::certified(LedgerKind::Multisig, &owner, &active.public(), &root);
    let st = RequesterState::after_genesis(&g, active, keygen(&mut r)).unwrap();
    let mut idx = TxIndex::default();
    idx.insert(ChainTx::Genesis(g));
    let requestee = keygen(&mut r);
    let cases = [((0, 0), Ok(())), ((1, 0), Err(TxRejection::BadOutputDelta)), ((0, 1), Err(TxRejection::BadOutputDelta))];
    for ((a, j), want) in cases {
        let tx = inflate_reputation(&st, &requestee, a, j, &mut r);
        assert_eq!(check_transaction(&tx, &idx), want, "extra ({a}, {j})");
    }
}

#[test]
fn forged_period_needs_a_majority() {
    let six = forge_against_quiet(13, 6, 1);
    assert!(!six.forged_applied, "{six:?}");
    assert_eq!(six.honest_actions, 0);
    let seven = forge_against_quiet(13, 7, 1);
    assert!(seven.forged_applied, "{seven:?}");
}

#[test]
fn home_attacks_are_caught() {
    for kind in [AttackKind::FalseReputation, AttackKind::Modification, AttackKind::DeviceInjection, AttackKind::LinkingProbe] {
        let rows = home_attack_rows(kind, 1);
        assert!(!rows.is_empty(), "{kind:?}");
        assert!(rows.iter().all(|r| r.detected), "{kind:?}: {rows:?}");
    }
}

#[test]
fn scripted_home_attack_lands_in_the_run_output() {
    let s = Scenario {
        horizon: 5.0,
        attack: Some(AttackScript::new(AttackKind::Modification, vec![])),
        ..Scenario::default()
    };
    let out = run(&s).unwrap();
    assert!(!out.metrics.attacks.is_empty());
}
