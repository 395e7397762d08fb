//! Experiments that run the full network simulation.

use serde::Serialize;

use crate::adversary::{AttackKind, AttackScript, ObmBehavior};
use crate::dtm::UtilizationBasis;
use crate::error::ScenarioError;
use crate::metrics::{DtmAppliedRow, DtmTraceRow, VerificationRow};
use crate::ids::NodeId;
use crate::netsim::message::MessageKind;
use crate::netsim::topology::Topology;
use crate::overlay::{sample_size, TrustConfig};
use crate::scenario::{RunOutput, Scenario, World};

/// OBM counts swept when comparing data-flow designs.
pub const FLOW_GRID: [usize; 4] = [5, 10, 15, 20];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowRow {
    pub m: usize,
    pub delay_lsb: f64,
    pub delay_broadcast: f64,
    pub bytes_lsb: u64,
    pub bytes_broadcast: u64,
    pub samples_lsb: usize,
    pub samples_broadcast: usize,
}

/// One requester talking to one home, each held on a fixed OBM, so the data
/// route does not change with the OBM count.
pub fn flow_scenario(m: usize, flood: bool, seed: u64) -> Scenario {
    let mut s = Scenario { name: format!("flow_m{m}_{}", if flood { "broadcast" } else { "lsb" }), seed, ..Scenario::default() };
    s.horizon = 60.0;
    s.network.obms = m;
    // Same candidate set at every m keeps every node id, and so every link, fixed.
    s.network.obm_candidates = Some(FLOW_GRID[FLOW_GRID.len() - 1]);
    s.network.bandwidth_mbps = 10.0;
    s.network.flood_data = flood;
    s.network.pin_members = true;
    s.homes.count = 1;
    s.load.requesters = 1;
    s.load.schedule = vec![(0.0, 4.0)];
    s
}

fn run_pinned(s: &Scenario) -> Result<RunOutput, ScenarioError> {
    let mut w = World::build(s)?;
    let (home, req) = (w.layout.homes[0], w.layout.requesters[0]);
    let (a, b) = (w.layout.obms[0], w.layout.obms[1]);
    w.engine.attach(home, a);
    w.engine.attach(req, b);
    Ok(w.run())
}

fn mean(xs: impl Iterator<Item = f64>) -> (f64, usize) {
    let (mut s, mut n) = (0.0, 0);
    for x in xs {
        s += x;
        n += 1;
    }
    (if n == 0 { f64::NAN } else { s / n as f64 }, n)
}

pub fn flow_separation(seed: u64) -> Result<Vec<FlowRow>, ScenarioError> {
    let mut rows = Vec::new();
    for m in FLOW_GRID {
        let lsb = run_pinned(&flow_scenario(m, false, seed))?;
        let base = run_pinned(&flow_scenario(m, true, seed))?;
        let (dl, nl) = mean(lsb.metrics.delays.iter().map(|d| d.delay_ms));
        let (db, nb) = mean(base.metrics.delays.iter().map(|d| d.delay_ms));
        rows.push(FlowRow {
            m,
            delay_lsb: dl,
            delay_broadcast: db,
            bytes_lsb: lsb.metrics.packets.total(|_| true).bytes,
            bytes_broadcast: base.metrics.packets.total(|_| true).bytes,
            samples_lsb: nl,
            samples_broadcast: nb,
        });
    }
    Ok(rows)
}

/// Least-squares line through (x, y) and its coefficient of determination.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - (icpt + slope * x)).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    (slope, icpt, r2)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrustDecayRow {
    pub t: f64,
    pub observer: u32,
    pub generator: u32,
    pub blocks_appended: i64,
    pub ptv: u32,
    pub n_txs: usize,
    pub tx_verified: usize,
    pub expected: usize,
}

pub fn trust_decay_scenario(seed: u64) -> Scenario {
    let mut s = Scenario { name: "trust_decay".into(), seed, ..Scenario::default() };
    s.horizon = 180.0;
    s.consensus.consensus_period = 1.0;
    s.load.requesters = 10;
    s.load.schedule = vec![(0.0, 40.0)];
    s
}

/// PTV a verifier should pick after `direct` validated blocks, read straight
/// off the tier table.
pub fn tier_ptv(cfg: &TrustConfig, direct: i64) -> u32 {
    let mut p = 100;
    for (threshold, v) in &cfg.direct_tiers {
        if direct >= *threshold {
            p = v.unwrap_or(cfg.floor);
        }
    }
    p.max(cfg.floor)
}

fn decay_row(v: &VerificationRow) -> TrustDecayRow {
    TrustDecayRow {
        t: v.t,
        observer: v.observer,
        generator: v.generator,
        blocks_appended: v.direct_before,
        ptv: v.ptv,
        n_txs: v.n_txs,
        tx_verified: v.executed,
        expected: sample_size(v.ptv, v.n_txs),
    }
}

pub fn trust_decay(seed: u64) -> Result<Vec<TrustDecayRow>, ScenarioError> {
    let out = World::build(&trust_decay_scenario(seed))?.run();
    Ok(out.metrics.verification.iter().map(decay_row).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverheadRow {
    pub m: usize,
    pub nodes: usize,
    pub blocks: usize,
    pub chain_txs: usize,
    pub lsb_bytes: u64,
    pub baseline_bytes: u64,
    pub ratio: f64,
    /// Mean route length in hops between OBMs, and between any two nodes.
    pub hops_obm: f64,
    pub hops_all: f64,
}

/// Mean hop count of the routes between every ordered pair drawn from `among`.
pub fn mean_hops(topo: &Topology, among: &[NodeId]) -> f64 {
    let (mut sum, mut n) = (0usize, 0usize);
    for a in among {
        for b in among {
            if a != b {
                if let Some(p) = topo.path(*a, *b) {
                    sum += p.len() - 1;
                    n += 1;
                }
            }
        }
    }
    if n == 0 { 0.0 } else { sum as f64 / n as f64 }
}

/// Management bytes of a run against the same protocol with every overlay
/// node managing the chain. Bytes are counted per hop on both sides, so each
/// OBM-to-OBM fan-out is rescaled by recipient count and mean route length:
/// transactions and blocks go to `nodes - 1` peers instead of `m - 1`, and
/// vouches go from every peer to every peer. Requester and home unicasts
/// stay as measured.
pub fn overhead_of(out: &RunOutput, m: usize, nodes: usize, hops_obm: f64, hops_all: f64) -> OverheadRow {
    let p = &out.metrics.packets;
    let lsb_bytes = p.total(MessageKind::is_management).bytes;
    let blocks = out.metrics.blocks.iter().filter(|b| b.event.starts_with("generated")).count();
    let fan = if m > 1 && hops_obm > 0.0 { ((nodes - 1) as f64 * hops_all) / ((m - 1) as f64 * hops_obm) } else { 0.0 };
    let fan2 = if m > 1 { fan * (nodes - 1) as f64 / (m - 1) as f64 } else { 0.0 };
    let bcast = (p.by_kind(MessageKind::TxForward).bytes + p.by_kind(MessageKind::BlockAnnounce).bytes) as f64;
    let vouch = p.by_kind(MessageKind::VouchNotice).bytes as f64;
    let unicast = p.by_kind(MessageKind::TxSubmit).bytes + p.by_kind(MessageKind::TxDeliver).bytes;
    let baseline_bytes = (bcast * fan + vouch * fan2).round() as u64 + unicast;
    OverheadRow {
        m,
        nodes,
        blocks,
        chain_txs: out.summary.chain_txs,
        lsb_bytes,
        baseline_bytes,
        ratio: lsb_bytes as f64 / baseline_bytes as f64,
        hops_obm,
        hops_all,
    }
}

pub fn overhead(seed: u64) -> Result<OverheadRow, ScenarioError> {
    let s = Scenario { name: "overhead".into(), seed, ..Scenario::default() };
    let w = World::build(&s)?;
    let all: Vec<NodeId> = (0..w.engine.topology.len() as u32).map(NodeId).collect();
    let hops_obm = mean_hops(&w.engine.topology, &w.layout.obms);
    let hops_all = mean_hops(&w.engine.topology, &all);
    let out = w.run();
    Ok(overhead_of(&out, s.network.obms, s.network.nodes, hops_obm, hops_all))
}

/// Management bytes of the default scenario at `m` OBMs.
pub fn management_bytes(m: usize, seed: u64) -> Result<u64, ScenarioError> {
    let mut s = Scenario { name: format!("bytes_m{m}"), seed, ..Scenario::default() };
    s.network.obms = m;
    let out = World::build(&s)?.run();
    Ok(out.metrics.packets.total(MessageKind::is_management).bytes)
}

pub fn dtm_scenario(seed: u64) -> Scenario {
    let mut s = Scenario { name: "dtm_trace".into(), seed, ..Scenario::default() };
    s.horizon = 55.0;
    s.consensus.consensus_period = 10.0;
    s.dtm.enabled = true;
    s.dtm.alpha_min = 0.25;
    s.dtm.alpha_max = 1.0;
    s.dtm.basis = UtilizationBasis::Capacity;
    s.load.requesters = 20;
    s.load.schedule = vec![(0.0, 10.0), (5.0, 32.0), (40.0, 44.0), (45.0, 12.0)];
    s
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DtmPoint {
    pub t: f64,
    pub alpha: f64,
    pub consensus_period: f64,
    pub action: String,
}

pub struct DtmTrace {
    /// Samples seen by the lowest-id OBM.
    pub points: Vec<DtmPoint>,
    pub samples: Vec<DtmTraceRow>,
    pub applied: Vec<DtmAppliedRow>,
}

pub fn dtm_trace(seed: u64) -> Result<DtmTrace, ScenarioError> {
    let s = dtm_scenario(seed);
    let w = World::build(&s)?;
    let first = w.layout.obms[0].0;
    let out = w.run();
    let applied: Vec<DtmAppliedRow> = out.metrics.dtm_applied.clone();
    let points = out
        .metrics
        .dtm_trace
        .iter()
        .filter(|r| r.node == first)
        .map(|r| {
            let action = applied
                .iter()
                .find(|a| a.node == first && a.window == r.window)
                .map(|a| a.action.clone())
                .unwrap_or_default();
            DtmPoint { t: r.t, alpha: r.alpha, consensus_period: r.consensus_period, action }
        })
        .collect();
    Ok(DtmTrace { points, samples: out.metrics.dtm_trace.clone(), applied })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BurstRow {
    pub observer: u32,
    pub attacker: u32,
    pub surplus_blocks: usize,
    pub dropped: usize,
    pub trust_decrements: i64,
}

pub fn burst_scenario(seed: u64, attack: bool) -> Scenario {
    let mut s = Scenario { name: if attack { "burst" } else { "honest" }.into(), seed, ..Scenario::default() };
    s.horizon = 30.0;
    if attack {
        let mut a = AttackScript::new(AttackKind::BreakingTimeInterval, vec![0]);
        a.burst = 3;
        s.attack = Some(a);
    }
    s
}

/// Per honest OBM: surplus blocks the attacker sent, how many were dropped
/// for arriving too soon, and the total trust taken off the attacker.
pub fn burst_outcome(out: &RunOutput, attacker: u32, obms: &[u32]) -> Vec<BurstRow> {
    let surplus = out.metrics.blocks.iter().filter(|b| b.observer == attacker && b.event == "generated_burst").count();
    obms.iter()
        .filter(|o| **o != attacker)
        .map(|o| BurstRow {
            observer: *o,
            attacker,
            surplus_blocks: surplus,
            dropped: out
                .metrics
                .blocks
                .iter()
                .filter(|b| b.observer == *o && b.event == "rejected" && b.detail == "too_soon")
                .count(),
            trust_decrements: -out
                .metrics
                .trust
                .iter()
                .filter(|t| t.observer == *o && t.delta < 0)
                .map(|t| t.delta)
                .sum::<i64>(),
        })
        .collect()
}

pub fn burst(seed: u64, attack: bool) -> Result<Vec<BurstRow>, ScenarioError> {
    let s = burst_scenario(seed, attack);
    let w = World::build(&s)?;
    let obms: Vec<u32> = w.layout.obms.iter().map(|o| o.0).collect();
    let attacker = obms[0];
    let out = w.run();
    Ok(burst_outcome(&out, attacker, &obms))
}

/// The attacker bursts once, on its first turn, then behaves.
pub fn single_burst(seed: u64) -> Result<Vec<BurstRow>, ScenarioError> {
    let s = burst_scenario(seed, true);
    let mut w = World::build(&s)?;
    let obms: Vec<u32> = w.layout.obms.iter().map(|o| o.0).collect();
    let attacker = w.layout.obms[0];
    let mut t = 0.0;
    while t < s.horizon && w.engine.obm(attacker).and_then(|o| o.last_own_block).is_none() {
        t += 0.001;
        w.run_to(t);
    }
    // The rest of the burst is already scheduled.
    if let Some(o) = w.engine.obm_mut(attacker) {
        o.behavior = ObmBehavior::Honest;
    }
    w.run_to(s.horizon);
    Ok(burst_outcome(&w.finish(), attacker.0, &obms))
}
