//! Attack trials that need no network: the appending attack against sampling
//! verifiers, vote forging in throughput agreement, and the home-tier attacks.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::adversary::{inflate_reputation, AttackKind, FakeKind, ObmBehavior};
use crate::crypto::{keygen, KeyPair, PublicKey};
use crate::dtm::{run_agreement, DtmConfig, DtmDecision};
use crate::ids::{DeviceId, NodeId};
use crate::ledger::{
    build_multisig, check_transaction, ActionKind, Block, ChainTx, GenesisTransaction, LedgerKind, MockBurnLedger,
    PolicyEntry, PolicySubject, RequesterState, TrustRoots, TxIndex, TxRejection,
};
use crate::metrics::AttackRow;
use crate::oracle;
use crate::overlay::{sample_indices, sample_size, BlockReject, ConsensusConfig, ObmConfig, ObmState, TrustConfig};
use crate::rng::{stream, SimRng};
use crate::smarthome::{CloudAccount, CloudStorage, DataSource, Device, LbmConfig, LbmState};
use crate::time::{SimDuration, SimTime};

/// PTV values tried when searching for the detection threshold.
pub const PTV_GRID: [u32; 10] = [10, 20, 30, 40, 50, 60, 70, 80, 90, 100];
pub const OBM_GRID: [usize; 8] = [3, 5, 7, 10, 13, 15, 17, 20];
/// Direct trust held by the attacker: past the top tier, so it gets the floor PTV.
const TRUSTED: i64 = 60;

/// `m` OBMs sharing a bootstrap block, OBM 0 compromised and holding a full
/// pool of honest transactions.
pub struct AppendingBench {
    pub m: usize,
    pub t_max: usize,
    attacker: ObmState,
    verifiers: Vec<ObmState>,
    seed: u64,
}

fn certified_chain(owner: &KeyPair, root: &KeyPair, rng: &mut SimRng) -> (ChainTx, RequesterState) {
    let active = keygen(rng);
    let g = GenesisTransaction::certified(LedgerKind::Multisig, owner, &active.public(), root);
    let st = RequesterState::after_genesis(&g, active, keygen(rng)).expect("genesis commits to the active key");
    (ChainTx::Genesis(g), st)
}

impl AppendingBench {
    pub fn new(m: usize, t_max: usize, seed: u64) -> Self {
        assert!(m >= 2, "need at least one honest verifier");
        let mut r = stream(seed, "appending-setup", m as u64);
        let root = keygen(&mut r);
        let keys: Vec<KeyPair> = (0..m).map(|_| keygen(&mut r)).collect();
        let pks: BTreeMap<NodeId, PublicKey> = keys.iter().enumerate().map(|(i, k)| (NodeId(i as u32), k.public())).collect();
        let requestee = keygen(&mut r);
        let mut genesis = Vec::new();
        let mut txs = Vec::new();
        for _ in 0..t_max {
            let owner = keygen(&mut r);
            let (g, st) = certified_chain(&owner, &root, &mut r);
            genesis.push(g);
            let tx = build_multisig(&st, &requestee, ActionKind::Access, DeviceId(1), true, &mut r).expect("keys convert");
            txs.push(ChainTx::Multisig(tx));
        }
        let boot = Block::new(crate::crypto::Hash256::ZERO, NodeId(0), genesis, &keys[0]);
        let consensus = ConsensusConfig::new(t_max, SimDuration::from_secs(10), SimDuration::from_millis(30));
        let config = ObmConfig {
            consensus,
            trust: TrustConfig::for_obm_count(m),
            dtm: DtmConfig::for_delay(SimDuration::from_millis(30), t_max, m),
        };
        let roots = TrustRoots::new([root.public()]);
        let mut states: Vec<ObmState> = keys
            .into_iter()
            .enumerate()
            .map(|(i, k)| {
                let mut o = ObmState::new(
                    NodeId(i as u32),
                    k,
                    pks.clone(),
                    config.clone(),
                    roots.clone(),
                    MockBurnLedger::default(),
                    stream(seed, "appending-obm", i as u64),
                );
                o.install_bootstrap(boot.clone());
                o
            })
            .collect();
        let verifiers = states.split_off(1);
        let mut attacker = states.pop().expect("attacker");
        for tx in txs {
            attacker.pool.insert(tx, SimTime::ZERO);
        }
        attacker.behavior = ObmBehavior::Appending { fakes_per_block: 1, fake: FakeKind::PkLink };
        AppendingBench { m, t_max, attacker, verifiers, seed }
    }

    /// The attacker's next block: t_max transactions, one of them fake.
    pub fn attack_block(&mut self) -> Block {
        self.attacker.generate_block(SimTime::ZERO).expect("pool is full")
    }

    /// Honest OBMs that catch a fake in `block` when the attacker's PTV is
    /// `ptv`. Run `run` fixes each verifier's sampling draws, so the same run
    /// at a higher PTV samples a superset.
    pub fn detectors(&mut self, block: &Block, ptv: u32, run: u32) -> Vec<NodeId> {
        let mut found = Vec::new();
        for v in self.verifiers.iter_mut() {
            v.trust.config.floor = ptv;
            v.trust.set_direct(NodeId(0), TRUSTED);
            v.reseed(stream(self.seed, "appending-verify", ((run as u64) << 32) | v.id.0 as u64));
            if let Err(BlockReject::BadTransaction { .. }) = v.check_content(block) {
                found.push(v.id);
            }
        }
        found
    }
}

fn ids_field(ids: &[NodeId]) -> String {
    ids.iter().map(|i| i.0.to_string()).collect::<Vec<_>>().join(";")
}

/// Attack outcome over `runs` blocks at one PTV.
pub fn appending_trials(bench: &mut AppendingBench, blocks: &[Block], ptv: u32, label: &str) -> Vec<AttackRow> {
    blocks
        .iter()
        .enumerate()
        .map(|(run, b)| {
            let d = bench.detectors(b, ptv, run as u32);
            AttackRow {
                scenario: label.into(),
                m: bench.m,
                ptv,
                run: run as u32,
                detected: !d.is_empty(),
                detecting_obms: ids_field(&d),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinPtvRow {
    pub m: usize,
    pub min_ptv: u32,
    pub runs: u32,
}

/// Least grid PTV at which every one of `runs` attack blocks is caught,
/// found by binary search over the grid. Also returns every trial made.
pub fn min_ptv(m: usize, runs: u32, seed: u64) -> (MinPtvRow, Vec<AttackRow>) {
    let mut bench = AppendingBench::new(m, 10, seed);
    let blocks: Vec<Block> = (0..runs).map(|_| bench.attack_block()).collect();
    let mut rows = Vec::new();
    let (mut lo, mut hi) = (0usize, PTV_GRID.len() - 1);
    // Invariant: PTV_GRID[hi] detects in all runs (100 verifies everything).
    while lo < hi {
        let mid = (lo + hi) / 2;
        let trial = appending_trials(&mut bench, &blocks, PTV_GRID[mid], "min_ptv");
        let all = trial.iter().all(|r| r.detected);
        rows.extend(trial);
        if all {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    (MinPtvRow { m, min_ptv: PTV_GRID[hi], runs }, rows)
}

pub fn min_ptv_table(runs: u32, seed: u64) -> (Vec<MinPtvRow>, Vec<AttackRow>) {
    let mut table = Vec::new();
    let mut all = Vec::new();
    for m in OBM_GRID {
        let (row, rows) = min_ptv(m, runs, seed);
        table.push(row);
        all.extend(rows);
    }
    (table, all)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuccessRow {
    pub m: usize,
    pub ptv: u32,
    pub runs: u32,
    pub success_pct: f64,
}

pub fn success_rate(m: usize, ptv: u32, runs: u32, seed: u64) -> (SuccessRow, Vec<AttackRow>) {
    let mut bench = AppendingBench::new(m, 10, seed);
    let blocks: Vec<Block> = (0..runs).map(|_| bench.attack_block()).collect();
    let rows = appending_trials(&mut bench, &blocks, ptv, "success_rate");
    let missed = rows.iter().filter(|r| !r.detected).count();
    (SuccessRow { m, ptv, runs, success_pct: 100.0 * missed as f64 / runs as f64 }, rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonteCarloRow {
    pub ptv: u32,
    pub verifiers: usize,
    pub trials: u32,
    pub detected: u32,
    pub rate: f64,
    pub exact: f64,
    pub se: f64,
    pub within_3se: bool,
}

pub const VERIFIER_GRID: [usize; 8] = [2, 4, 6, 9, 12, 14, 16, 19];

/// Detection rate from independent verifier samples against the exact
/// subset count. One fake at a uniform position among `t_max`.
pub fn monte_carlo(t_max: usize, trials: u32, seed: u64) -> Vec<MonteCarloRow> {
    let mut out = Vec::new();
    for (pi, ptv) in PTV_GRID.iter().enumerate() {
        for (vi, verifiers) in VERIFIER_GRID.iter().enumerate() {
            let mut r = stream(seed, "monte-carlo", (pi * 100 + vi) as u64);
            let k = sample_size(*ptv, t_max);
            let mut detected = 0;
            for _ in 0..trials {
                let fake = r.gen_range(0..t_max);
                if (0..*verifiers).any(|_| sample_indices(t_max, k, &mut r).contains(&fake)) {
                    detected += 1;
                }
            }
            let exact = oracle::detect_prob(t_max, 1, *ptv, *verifiers);
            let rate = detected as f64 / trials as f64;
            let se = (exact * (1.0 - exact) / trials as f64).sqrt();
            out.push(MonteCarloRow {
                ptv: *ptv,
                verifiers: *verifiers,
                trials,
                detected,
                rate,
                exact,
                se,
                within_3se: (rate - exact).abs() <= 3.0 * se,
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgreementRow {
    pub run: u32,
    pub m: usize,
    pub forgers: usize,
    /// Distinct actions (other than no action) applied by honest OBMs.
    pub honest_actions: usize,
    pub forged_applied: bool,
    pub applied: String,
}

fn skewed_votes(m: usize, forgers: usize, forged: DtmDecision, r: &mut SimRng) -> Vec<(NodeId, DtmDecision)> {
    let options = [
        DtmDecision::NoAction,
        DtmDecision::SetConsensusPeriod(SimDuration::from_millis(2500)),
        DtmDecision::SetConsensusPeriod(SimDuration::from_millis(3000)),
        DtmDecision::SetConsensusPeriod(SimDuration::from_millis(7000)),
    ];
    let weights: Vec<u32> = options.iter().map(|_| r.gen_range(0..10)).collect();
    let total: u32 = weights.iter().sum::<u32>().max(1);
    let mut ids: Vec<u32> = (0..m as u32).collect();
    ids.shuffle(r);
    let bad: Vec<u32> = ids[..forgers].to_vec();
    (0..m as u32)
        .map(|i| {
            if bad.contains(&i) {
                return (NodeId(i), forged);
            }
            let mut x = r.gen_range(0..total);
            let mut pick = options[0];
            for (o, w) in options.iter().zip(&weights) {
                if x < *w {
                    pick = *o;
                    break;
                }
                x -= w;
            }
            (NodeId(i), pick)
        })
        .collect()
}

/// One window of agreement with `forgers` OBMs pushing a consensus period
/// nobody else computed.
pub fn forged_window(m: usize, forgers: usize, votes: Option<Vec<(NodeId, DtmDecision)>>, run: u32, seed: u64) -> AgreementRow {
    let mut r = stream(seed, "agreement", run as u64);
    let forged = DtmDecision::SetConsensusPeriod(SimDuration::from_millis(400));
    let votes = votes.unwrap_or_else(|| skewed_votes(m, forgers, forged, &mut r));
    let keys: BTreeMap<NodeId, KeyPair> = votes.iter().map(|(id, _)| (*id, keygen(&mut r))).collect();
    let res = run_agreement(run as u64, &votes, &keys, SimDuration::from_millis(30), 0.0, &mut r);
    let bad: Vec<NodeId> = votes.iter().filter(|(_, d)| *d == forged).map(|(id, _)| *id).collect();
    let honest: Vec<&(NodeId, DtmDecision, bool)> = res.applied.iter().filter(|(id, _, _)| !bad.contains(id)).collect();
    let mut actions: Vec<DtmDecision> =
        honest.iter().map(|(_, d, _)| *d).filter(|d| *d != DtmDecision::NoAction).collect();
    actions.sort();
    actions.dedup();
    AgreementRow {
        run,
        m,
        forgers: bad.len(),
        honest_actions: actions.len(),
        forged_applied: honest.iter().any(|(_, d, _)| *d == forged),
        applied: actions.iter().map(|d| d.label()).collect::<Vec<_>>().join(";"),
    }
}

/// Forgers vote a bogus period while honest OBMs all vote for no action.
pub fn forge_against_quiet(m: usize, forgers: usize, seed: u64) -> AgreementRow {
    let forged = DtmDecision::SetConsensusPeriod(SimDuration::from_millis(400));
    let votes = (0..m as u32)
        .map(|i| (NodeId(i), if (i as usize) < forgers { forged } else { DtmDecision::NoAction }))
        .collect();
    forged_window(m, forgers, Some(votes), 0, seed)
}

/// Seeded windows with skewed honest votes and up to half the OBMs forging.
pub fn agreement_safety(runs: u32, seed: u64) -> Vec<AgreementRow> {
    (0..runs)
        .map(|run| {
            let mut r = stream(seed, "agreement-shape", run as u64);
            let m = r.gen_range(3..=20);
            let forgers = r.gen_range(0..=m / 2);
            forged_window(m, forgers, None, run, seed)
        })
        .collect()
}

fn home_row(kind: &str, run: u32, detected: bool, by: &str) -> AttackRow {
    AttackRow { scenario: kind.into(), m: 0, ptv: 0, run, detected, detecting_obms: by.into() }
}

fn home_with_cloud(seed: u64) -> (LbmState, CloudStorage, SimRng) {
    let mut r = stream(seed, "home-attack", 0);
    let root = keygen(&mut r);
    let home_key = keygen(&mut r);
    let policy = vec![PolicyEntry::new(PolicySubject::Device(DeviceId(1)), ActionKind::StoreCloud, DeviceId(1))];
    let mut lbm = LbmState::new(NodeId(1), NodeId(0), home_key.clone(), policy, LbmConfig::default(), stream(seed, "home-lbm", 0));
    for d in [1, 2] {
        let dev = Device::new(DeviceId(d), [ActionKind::StoreCloud], DataSource::default(), &lbm.params, &mut r);
        lbm.device_genesis(dev, true).expect("fresh device");
    }
    let (_, st) = certified_chain(&home_key, &root, &mut r);
    lbm.attach_overlay(Some(st), None);
    let cloud = CloudStorage::new(NodeId(2), NodeId(0), keygen(&mut r));
    lbm.set_cloud(CloudAccount { cloud_pk: cloud.public_key(), cloud_node: NodeId(2), cloud_obm: NodeId(0) });
    (lbm, cloud, r)
}

/// Home-tier attacks played directly against the library. `detected` means
/// the defence held.
pub fn home_attack_rows(kind: AttackKind, seed: u64) -> Vec<AttackRow> {
    match kind {
        AttackKind::FalseReputation => {
            let mut r = stream(seed, "false-reputation", 0);
            let root = keygen(&mut r);
            let owner = keygen(&mut r);
            let (g, st) = certified_chain(&owner, &root, &mut r);
            let mut idx = TxIndex::default();
            idx.insert(g);
            let requestee = keygen(&mut r);
            [(1, 0), (0, 1), (2, 0)]
                .iter()
                .enumerate()
                .map(|(i, (a, b))| {
                    let tx = inflate_reputation(&st, &requestee, *a, *b, &mut r);
                    let caught = check_transaction(&tx, &idx) == Err(TxRejection::BadOutputDelta);
                    home_row("false_reputation", i as u32, caught, "verifier")
                })
                .collect()
        }
        AttackKind::Modification => {
            let (mut lbm, mut cloud, _) = home_with_cloud(seed);
            let blob = b"reading:21.5".to_vec();
            let (_, req) = lbm.store_cloud_flow(DeviceId(1), blob.clone()).expect("policy allows the store");
            let (ack, ok) = cloud.handle_store(SimTime::ZERO, &req);
            assert!(ok && lbm.on_store_ack(&ack));
            cloud.tamper(&req.credential, 0, b"reading:99.9".to_vec());
            let fetched = cloud.records(&req.credential)[0].blob.clone();
            let caught = lbm.verify_cloud_copy(&ack.tx_id, &fetched) == Some(false);
            vec![home_row("modification", 0, caught, "lbm")]
        }
        AttackKind::DeviceInjection => {
            let (mut lbm, _, mut r) = home_with_cloud(seed);
            let rogue = Device::new(DeviceId(9), [ActionKind::Access], DataSource::default(), &lbm.params, &mut r);
            let refused = lbm.device_genesis(rogue, false).is_err();
            vec![home_row("device_injection", 0, refused, "lbm")]
        }
        AttackKind::LinkingProbe => {
            let (mut lbm, _, _) = home_with_cloud(seed);
            let a = lbm.credential(DeviceId(1));
            let b = lbm.credential(DeviceId(2));
            vec![home_row("linking_probe", 0, a != b && a != lbm.public_key(), "lbm")]
        }
        _ => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_ptv_always_detects() {
        let mut b = AppendingBench::new(3, 10, 1);
        let blk = b.attack_block();
        assert_eq!(blk.txs.len(), 10);
        assert_eq!(b.detectors(&blk, 100, 0).len(), 2);
    }

    #[test]
    fn detection_is_monotone_in_ptv() {
        let mut b = AppendingBench::new(5, 10, 2);
        let blocks: Vec<Block> = (0..10).map(|_| b.attack_block()).collect();
        let mut prev = 0;
        for p in PTV_GRID {
            let n = appending_trials(&mut b, &blocks, p, "t").iter().filter(|r| r.detected).count();
            assert!(n >= prev);
            prev = n;
        }
        assert_eq!(prev, 10);
    }

    #[test]
    fn forging_needs_a_majority() {
        assert!(!forge_against_quiet(13, 6, 3).forged_applied);
        assert!(forge_against_quiet(13, 7, 3).forged_applied);
    }

    #[test]
    fn home_attacks_are_defeated() {
        for k in [AttackKind::FalseReputation, AttackKind::Modification, AttackKind::DeviceInjection, AttackKind::LinkingProbe] {
            let rows = home_attack_rows(k, 5);
            assert!(!rows.is_empty());
            assert!(rows.iter().all(|r| r.detected), "{k:?}");
        }
    }
}
