use std::collections::BTreeMap;

use proptest::prelude::*;

use lsb::crypto::{keygen, KeyPair};
use lsb::dtm::{
    compute_alpha, decide, recompute_cp, recompute_m, run_agreement, vote_body, AgreementRound, DtmConfig, DtmDecision,
    DtmMsg, RoundOut,
};
use lsb::ids::NodeId;
use lsb::oracle::eq1_consensus_period;
use lsb::rng::stream;
use lsb::time::SimDuration;

fn cfg() -> DtmConfig {
    DtmConfig::for_delay(SimDuration::from_millis(30), 10, 50)
}

fn cp(secs: f64) -> DtmDecision {
    DtmDecision::SetConsensusPeriod(SimDuration::from_secs_f64(secs))
}

#[test]
fn alpha_from_counts() {
    assert!((compute_alpha(210, 87) - 2.41).abs() < 0.005);
    assert_eq!(compute_alpha(40, 40), 1.0);
    assert!(compute_alpha(5, 0).is_infinite());
    assert_eq!(compute_alpha(0, 0), 0.0);
}

#[test]
fn period_from_rate() {
    let c = cfg();
    assert_eq!(c.alpha_mid(), 0.625);
    assert!((eq1_consensus_period(0.625, 10, 13, 32.0) - 2.539).abs() < 5e-4);
    assert_eq!(recompute_cp(&c, 32.0, 13), Some(2.5));
    assert_eq!(recompute_cp(&c, 12.0, 13), Some(7.0));
    assert_eq!(recompute_cp(&c, 0.0, 13), None);
}

#[test]
fn obm_count_from_rate() {
    let c = cfg();
    assert_eq!(recompute_m(&c, 44.0), 50);
    assert_eq!(recompute_m(&c, 0.0), 1);
    // 0.1 tx/s over 600 s fills 60 slots; 6.25 per OBM needs 10 of them.
    assert_eq!(recompute_m(&c, 0.1), 10);
}

#[test]
fn decisions_follow_the_bounds() {
    let c = cfg();
    let now = SimDuration::from_secs(10);
    assert_eq!(decide(&c, 2.46, 32.0, now, 13), cp(2.5));
    assert_eq!(decide(&c, 0.846, 32.0, now, 13), DtmDecision::NoAction);
    assert_eq!(decide(&c, 0.23, 12.0, SimDuration::from_secs_f64(2.5), 13), cp(7.0));
    // An idle network gives no rate to solve for.
    assert_eq!(decide(&c, 0.0, 0.0, now, 13), DtmDecision::NoAction);
}

#[test]
fn out_of_range_period_reclusters() {
    let c = cfg();
    let low = decide(&c, 0.01, 0.1, SimDuration::from_secs(300), 13);
    assert_eq!(low, DtmDecision::Recluster { m: 10, cp: c.cp_max });
    let high = decide(&c, 5.0, 20_000.0, SimDuration::from_secs_f64(0.06), 13);
    assert_eq!(high, DtmDecision::Recluster { m: 50, cp: c.cp_max });
}

fn keys(n: u32) -> BTreeMap<NodeId, KeyPair> {
    let mut r = stream(3, "dtm-keys", 0);
    (0..n).map(|i| (NodeId(i), keygen(&mut r))).collect()
}

fn agree(votes: &[DtmDecision], seed: u64) -> Vec<(NodeId, DtmDecision, bool)> {
    let ks = keys(votes.len() as u32);
    let decisions: Vec<(NodeId, DtmDecision)> = votes.iter().enumerate().map(|(i, d)| (NodeId(i as u32), *d)).collect();
    let mut r = stream(seed, "dtm-agree", 0);
    run_agreement(1, &decisions, &ks, SimDuration::from_millis(30), 0.0, &mut r).applied
}

#[test]
fn unanimous_window() {
    for (_, d, fallback) in agree(&[cp(2.5); 13], 1) {
        assert_eq!(d, cp(2.5));
        assert!(!fallback);
    }
}

#[test]
fn majority_carries_the_minority() {
    let mut votes = vec![cp(2.5); 7];
    votes.extend([cp(3.0); 6]);
    for seed in 0..20 {
        for (id, d, _) in agree(&votes, seed) {
            assert_eq!(d, cp(2.5), "seed {seed} node {id:?}");
        }
    }
}

#[test]
fn three_way_split_falls_back() {
    let mut votes = vec![cp(2.5); 6];
    votes.extend([cp(3.0); 6]);
    votes.push(DtmDecision::NoAction);
    for seed in 0..10 {
        let applied = agree(&votes, seed);
        assert!(applied.iter().all(|(_, _, fallback)| *fallback), "seed {seed}");
        let first = applied[0].1;
        assert!(applied.iter().all(|(_, d, _)| *d == first), "seed {seed}");
    }
}

fn proposal(window: u64, from: NodeId, key: &KeyPair, d: DtmDecision) -> DtmMsg {
    DtmMsg { window, decision: d, proposer: from, sigs: vec![(from, key.sign(&vote_body(window, &d)))] }
}

#[test]
fn highest_proposer_wins_the_tiebreak() {
    let ks = keys(5);
    let pks = ks.iter().map(|(k, v)| (*k, v.public())).collect();
    let cp_max = SimDuration::from_secs(600);
    let mut round = AgreementRound::new(9, NodeId(0), 5, cp(2.5));
    round.plausible_cp = Some(SimDuration::from_secs_f64(2.5));
    assert!(matches!(round.on_propose_timer(&ks[&NodeId(0)]), Some(RoundOut::Propose(_))));
    round.on_message(&proposal(9, NodeId(3), &ks[&NodeId(3)], cp(3.0)), &pks, &ks[&NodeId(0)], cp_max);
    round.on_message(&proposal(9, NodeId(1), &ks[&NodeId(1)], cp(2.5)), &pks, &ks[&NodeId(0)], cp_max);
    assert_eq!(round.signatures(&cp(2.5)), 2);
    assert_eq!(round.on_timeout(), cp(3.0));
    assert_eq!(round.decided, Some((cp(3.0), true)));
}

#[test]
fn fallback_needs_a_majority_of_action_voters() {
    let ks = keys(5);
    let pks = ks.iter().map(|(k, v)| (*k, v.public())).collect();
    let mut round = AgreementRound::new(2, NodeId(0), 5, DtmDecision::NoAction);
    round.plausible_cp = Some(SimDuration::from_secs_f64(2.5));
    round.on_message(&proposal(2, NodeId(4), &ks[&NodeId(4)], cp(2.5)), &pks, &ks[&NodeId(0)], SimDuration::from_secs(600));
    assert_eq!(round.on_timeout(), DtmDecision::NoAction);
}

#[test]
fn bad_signatures_are_ignored() {
    let ks = keys(3);
    let pks = ks.iter().map(|(k, v)| (*k, v.public())).collect();
    let mut round = AgreementRound::new(4, NodeId(0), 3, cp(2.5));
    let mut m = proposal(4, NodeId(1), &ks[&NodeId(2)], cp(2.5));
    m.sigs[0].0 = NodeId(1);
    assert!(round.on_message(&m, &pks, &ks[&NodeId(0)], SimDuration::from_secs(600)).is_empty());
    assert_eq!(round.signatures(&cp(2.5)), 0);
    assert!(!round.has_signed());
}

proptest! {
    #[test]
    fn controller_moves_the_right_way(alpha in 0.0f64..4.0, rate in 0.5f64..200.0, now_ms in 100u64..600_000, m in 1usize..50) {
        let c = cfg();
        let now = SimDuration::from_millis(now_ms);
        match decide(&c, alpha, rate, now, m) {
            DtmDecision::NoAction => {}
            DtmDecision::SetConsensusPeriod(p) => {
                prop_assert!(p >= c.cp_min && p <= c.cp_max);
                if alpha > c.alpha_max {
                    prop_assert!(p < now);
                } else {
                    prop_assert!(alpha < c.alpha_min);
                    prop_assert!(p > now);
                }
            }
            DtmDecision::Recluster { m: m2, cp } => {
                prop_assert_eq!(cp, c.cp_max);
                if alpha > c.alpha_max {
                    prop_assert!(m2 as usize > m);
                } else {
                    prop_assert!((m2 as usize) < m);
                }
            }
        }
    }

    #[test]
    fn recomputed_period_matches_the_relation(rate in 0.5f64..200.0, m in 1usize..50) {
        let c = cfg();
        let exact = eq1_consensus_period(c.alpha_mid(), c.t_max, m, rate);
        let got = recompute_cp(&c, rate, m).unwrap();
        prop_assert!((got - exact).abs() <= 0.25 + 1e-9);
        prop_assert_eq!((got * 2.0).fract(), 0.0);
    }
}
