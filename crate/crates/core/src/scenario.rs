//! Scenario files: parsing, validation, and building a runnable network from them.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversary::{fake_transaction, AttackKind, AttackScript};
use crate::crypto::{keygen, Hash256, KeyPair, PublicKey};
use crate::dtm::{DtmConfig, RateEstimator, UtilizationBasis};
use crate::error::ScenarioError;
use crate::ids::{DeviceId, NodeId};
use crate::ledger::{
    ActionKind, Block, ChainTx, GenesisTransaction, LedgerKind, MockBurnLedger, PolicyEntry, PolicySubject,
    RequesterState, TrustRoots,
};
use crate::metrics::MetricsBundle;
use crate::netsim::message::Timer;
use crate::netsim::{max_e2e_estimate, Engine, NetConfig, Node, RequesterNode, Target, Topology};
use crate::overlay::{ComplianceConfig, ConsensusConfig, ObmConfig, ObmState, TrustConfig};
use crate::rng::{child_seed, stream};
use crate::smarthome::{CloudAccount, CloudStorage, DataSource, Device, LbmConfig, LbmState};
use crate::time::{SimDuration, SimTime};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    /// Overlay nodes in total, including idle ones.
    pub nodes: usize,
    /// OBMs active at start.
    pub obms: usize,
    /// Nodes able to act as OBM; reclustering picks from these by id.
    pub obm_candidates: Option<usize>,
    /// Per-link latency drawn uniformly from this range, milliseconds.
    pub latency_ms: [f64; 2],
    pub loss: f64,
    pub bandwidth_mbps: f64,
    /// Baseline transport: data packets flooded among OBMs.
    pub flood_data: bool,
    /// Override for the derived end-to-end bound, milliseconds.
    pub max_e2e_ms: Option<f64>,
    /// Keep members on their first OBM instead of re-homing on reclustering.
    pub pin_members: bool,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            nodes: 50,
            obms: 13,
            obm_candidates: None,
            latency_ms: [1.0, 10.0],
            loss: 0.0,
            bandwidth_mbps: 100.0,
            flood_data: false,
            max_e2e_ms: None,
            pin_members: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConsensusSection {
    pub t_max: usize,
    /// Initial consensus period, seconds.
    pub consensus_period: f64,
    pub early_fraction: f64,
    pub early_window: usize,
    pub early_threshold: usize,
}

impl Default for ConsensusSection {
    fn default() -> Self {
        let c = ComplianceConfig::default();
        ConsensusSection {
            t_max: 10,
            consensus_period: 10.0,
            early_fraction: c.early_fraction,
            early_window: c.early_window,
            early_threshold: c.early_threshold,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrustSection {
    /// (evidence threshold, PTV); a missing PTV means the floor.
    pub direct_tiers: Option<Vec<(i64, Option<u32>)>>,
    pub indirect_tiers: Option<Vec<(i64, Option<u32>)>>,
    pub floor: Option<u32>,
    /// Direct evidence every OBM starts with about every other OBM.
    pub initial_direct: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DtmSection {
    pub enabled: bool,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Seconds; defaults to twice the end-to-end bound.
    pub cp_min: Option<f64>,
    pub cp_max: f64,
    pub estimator: RateEstimator,
    pub basis: UtilizationBasis,
    /// Seconds; defaults to six end-to-end bounds.
    pub activation_delay: Option<f64>,
}

impl Default for DtmSection {
    fn default() -> Self {
        DtmSection {
            enabled: false,
            alpha_min: 0.25,
            alpha_max: 1.0,
            cp_min: None,
            cp_max: 600.0,
            estimator: RateEstimator::TrailingHalfPeriod,
            basis: UtilizationBasis::Measured,
            activation_delay: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadSection {
    pub requesters: usize,
    /// (start second, total tx/s across all requesters), in time order.
    pub schedule: Vec<(f64, f64)>,
    /// Seconds a requester waits for an answer before switching OBM.
    pub timeout: f64,
    pub action: ActionKind,
}

impl Default for LoadSection {
    fn default() -> Self {
        LoadSection { requesters: 5, schedule: vec![(0.0, 20.0)], timeout: 2.0, action: ActionKind::Access }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HomesSection {
    pub count: usize,
    pub payload_bytes: u32,
    pub max_inbound_rate: f64,
}

impl Default for HomesSection {
    fn default() -> Self {
        let c = LbmConfig::default();
        HomesSection { count: 5, payload_bytes: c.payload_bytes, max_inbound_rate: c.max_inbound_rate }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    /// Seconds.
    pub horizon: f64,
    pub network: NetworkSection,
    pub consensus: ConsensusSection,
    pub trust: TrustSection,
    pub dtm: DtmSection,
    pub load: LoadSection,
    pub homes: HomesSection,
    pub attack: Option<AttackScript>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "default".into(),
            seed: 1,
            horizon: 60.0,
            network: NetworkSection::default(),
            consensus: ConsensusSection::default(),
            trust: TrustSection::default(),
            dtm: DtmSection::default(),
            load: LoadSection::default(),
            homes: HomesSection::default(),
            attack: None,
        }
    }
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Scenario::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenarios serialize")
    }

    pub fn candidates(&self) -> usize {
        self.network.obm_candidates.unwrap_or(self.network.obms)
    }

    /// Nodes the layout needs: OBM candidates, homes, requesters, one cloud.
    pub fn required_nodes(&self) -> usize {
        self.candidates() + self.homes.count + self.load.requesters + 1
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let n = &self.network;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("horizon must be positive"));
        }
        if n.obms == 0 {
            return Err(invalid("at least one OBM is required"));
        }
        if n.obms > self.candidates() {
            return Err(invalid(format!("obms = {} exceeds obm_candidates = {}", n.obms, self.candidates())));
        }
        if self.required_nodes() > n.nodes {
            return Err(invalid(format!("layout needs {} nodes but network.nodes = {}", self.required_nodes(), n.nodes)));
        }
        if !(n.latency_ms[0] > 0.0 && n.latency_ms[0] <= n.latency_ms[1]) {
            return Err(invalid("latency_ms must be [min, max] with 0 < min <= max"));
        }
        if !(0.0..1.0).contains(&n.loss) {
            return Err(invalid("loss must lie in [0, 1)"));
        }
        if n.bandwidth_mbps <= 0.0 {
            return Err(invalid("bandwidth_mbps must be positive"));
        }
        if self.consensus.t_max == 0 {
            return Err(invalid("t_max must be at least 1"));
        }
        if self.consensus.consensus_period <= 0.0 {
            return Err(invalid("consensus_period must be positive"));
        }
        if !(0.0..=1.0).contains(&self.consensus.early_fraction) {
            return Err(invalid("early_fraction must lie in [0, 1]"));
        }
        if self.dtm.alpha_min >= self.dtm.alpha_max || self.dtm.alpha_min < 0.0 {
            return Err(invalid("need 0 <= alpha_min < alpha_max"));
        }
        let mut last = f64::NEG_INFINITY;
        for (t, r) in &self.load.schedule {
            if *t < last || *t < 0.0 {
                return Err(invalid("load schedule must be in non-decreasing time order from 0"));
            }
            if *r < 0.0 || !r.is_finite() {
                return Err(invalid("load rates must be finite and non-negative"));
            }
            last = *t;
        }
        if self.load.requesters == 0 && self.load.schedule.iter().any(|(_, r)| *r > 0.0) {
            return Err(invalid("load given but no requesters"));
        }
        if self.homes.count == 0 && self.load.requesters > 0 {
            return Err(invalid("requesters need at least one home to address"));
        }
        if let Some(a) = &self.attack {
            if a.obm_behavior().is_some() {
                if a.nodes.is_empty() {
                    return Err(invalid("overlay attack names no compromised OBM"));
                }
                if let Some(bad) = a.nodes.iter().find(|id| **id as usize >= self.candidates()) {
                    return Err(invalid(format!("attack node {bad} is not an OBM")));
                }
            }
        }
        Ok(())
    }
}

/// Where each role sits in the node id space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub obms: Vec<NodeId>,
    pub homes: Vec<NodeId>,
    pub requesters: Vec<NodeId>,
    pub cloud: NodeId,
    pub nodes: usize,
}

impl Layout {
    pub fn of(s: &Scenario) -> Self {
        let c = s.candidates() as u32;
        let h = s.homes.count as u32;
        let r = s.load.requesters as u32;
        Layout {
            obms: (0..c).map(NodeId).collect(),
            homes: (c..c + h).map(NodeId).collect(),
            requesters: (c + h..c + h + r).map(NodeId).collect(),
            cloud: NodeId(c + h + r),
            nodes: s.network.nodes,
        }
    }
}

/// Device every generated home exposes to the overlay.
pub const HOME_DEVICE: DeviceId = DeviceId(1);

/// Encoded size of a block of `t_max` ordinary transactions.
pub fn max_block_bytes(t_max: usize) -> usize {
    let mut r = stream(0, "block-size", 0);
    let key = keygen(&mut r);
    let g = GenesisTransaction::certified(LedgerKind::Multisig, &key, &key.public(), &key);
    let anchor = ChainTx::Genesis(g);
    let txs: Vec<ChainTx> = (0..t_max).map(|_| ChainTx::Multisig(fake_transaction(&anchor, &mut r))).collect();
    Block::new(Hash256::ZERO, NodeId(0), txs, &key).to_bytes().len()
}

/// Arrival times for a piecewise-constant load, `k / rate` apart from each
/// segment start.
pub fn arrivals(schedule: &[(f64, f64)], horizon: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for (i, (start, rate)) in schedule.iter().enumerate() {
        let end = schedule.get(i + 1).map(|s| s.0).unwrap_or(horizon).min(horizon);
        if *rate <= 0.0 {
            continue;
        }
        let mut k = 0u64;
        loop {
            let t = start + k as f64 / rate;
            if t >= end {
                break;
            }
            out.push(t);
            k += 1;
        }
    }
    out
}

pub struct World {
    pub engine: Engine,
    pub layout: Layout,
    pub max_e2e: SimDuration,
    pub scenario: Scenario,
    attack_armed: bool,
}

fn requester_chain(ledger: LedgerKind, owner: &KeyPair, root: &KeyPair, rng: &mut crate::rng::SimRng) -> (ChainTx, RequesterState) {
    let active = keygen(rng);
    let upcoming = keygen(rng);
    let g = GenesisTransaction::certified(ledger, owner, &active.public(), root);
    let st = RequesterState::after_genesis(&g, active, upcoming).expect("genesis commits to the active key");
    (ChainTx::Genesis(g), st)
}

impl World {
    pub fn build(s: &Scenario) -> Result<Self, ScenarioError> {
        s.validate()?;
        let layout = Layout::of(s);
        let seed = s.seed;
        let topology = Topology::full_mesh(
            layout.nodes,
            child_seed(seed, "topology", 0),
            s.network.latency_ms[0],
            s.network.latency_ms[1],
            s.network.loss,
        );
        let bw = s.network.bandwidth_mbps * 1e6;
        let t_max = s.consensus.t_max;
        let max_e2e = match s.network.max_e2e_ms {
            Some(ms) => SimDuration::from_secs_f64(ms / 1000.0),
            None => max_e2e_estimate(&topology, &layout.obms, bw, max_block_bytes(t_max)),
        };

        let mut krng = stream(seed, "keys", 0);
        let root = keygen(&mut krng);
        let roots = TrustRoots::new([root.public()]);
        let burns = MockBurnLedger::default();
        let obm_keys: Vec<KeyPair> = layout.obms.iter().map(|_| keygen(&mut krng)).collect();
        let obm_pks: BTreeMap<NodeId, PublicKey> =
            layout.obms.iter().zip(&obm_keys).map(|(id, k)| (*id, k.public())).collect();

        let mut bootstrap: Vec<ChainTx> = Vec::new();
        let home_keys: Vec<KeyPair> = layout.homes.iter().map(|_| keygen(&mut krng)).collect();
        let cloud_key = keygen(&mut krng);
        let first_obm = layout.obms[0];

        let mut nodes: Vec<Node> = (0..layout.nodes).map(|_| Node::Idle).collect();

        let mut consensus =
            ConsensusConfig::new(t_max, SimDuration::from_secs_f64(s.consensus.consensus_period), max_e2e);
        consensus.compliance.early_fraction = s.consensus.early_fraction;
        consensus.compliance.early_window = s.consensus.early_window;
        consensus.compliance.early_threshold = s.consensus.early_threshold;
        let mut trust = TrustConfig::for_obm_count(s.network.obms);
        if let Some(t) = &s.trust.direct_tiers {
            trust.direct_tiers = t.clone();
        }
        if let Some(t) = &s.trust.indirect_tiers {
            trust.indirect_tiers = t.clone();
        }
        if let Some(f) = s.trust.floor {
            trust.floor = f;
        }
        let mut dtm = DtmConfig::for_delay(max_e2e, t_max, layout.obms.len());
        dtm.enabled = s.dtm.enabled;
        dtm.alpha_min = s.dtm.alpha_min;
        dtm.alpha_max = s.dtm.alpha_max;
        if let Some(c) = s.dtm.cp_min {
            dtm.cp_min = SimDuration::from_secs_f64(c);
        }
        dtm.cp_max = SimDuration::from_secs_f64(s.dtm.cp_max);
        dtm.estimator = s.dtm.estimator;
        dtm.basis = s.dtm.basis;
        if let Some(a) = s.dtm.activation_delay {
            dtm.activation_delay = SimDuration::from_secs_f64(a);
        }
        let config = ObmConfig { consensus, trust, dtm };

        // Homes.
        let lbm_cfg = LbmConfig {
            max_inbound_rate: s.homes.max_inbound_rate,
            payload_bytes: s.homes.payload_bytes,
            ..LbmConfig::default()
        };
        for (i, (id, key)) in layout.homes.iter().zip(&home_keys).enumerate() {
            let mut hr = stream(seed, "home", i as u64);
            let policy = vec![
                PolicyEntry::new(PolicySubject::Any, ActionKind::Access, HOME_DEVICE),
                PolicyEntry::new(PolicySubject::Any, ActionKind::Monitor, HOME_DEVICE),
                PolicyEntry::new(PolicySubject::Device(HOME_DEVICE), ActionKind::StoreLocally, HOME_DEVICE),
                PolicyEntry::new(PolicySubject::Device(HOME_DEVICE), ActionKind::StoreCloud, HOME_DEVICE),
            ];
            let mut lbm = LbmState::new(*id, first_obm, key.clone(), policy, lbm_cfg.clone(), stream(seed, "lbm", i as u64));
            let dev = Device::new(
                HOME_DEVICE,
                [ActionKind::Access, ActionKind::Monitor, ActionKind::StoreLocally, ActionKind::StoreCloud],
                DataSource::default(),
                &lbm.params,
                &mut hr,
            );
            lbm.device_genesis(dev, true).expect("fresh device registers");
            let (gm, multisig) = requester_chain(LedgerKind::Multisig, key, &root, &mut hr);
            let (gs, single) = requester_chain(LedgerKind::SingleSig, key, &root, &mut hr);
            bootstrap.push(gm);
            bootstrap.push(gs);
            lbm.attach_overlay(Some(multisig), Some(single));
            lbm.set_cloud(CloudAccount { cloud_pk: cloud_key.public(), cloud_node: layout.cloud, cloud_obm: first_obm });
            nodes[id.0 as usize] = Node::Lbm(Box::new(lbm));
        }

        // Requesters, each cycling over all homes starting at its own index.
        for (i, id) in layout.requesters.iter().enumerate() {
            let mut rr = stream(seed, "requester", i as u64);
            let owner = keygen(&mut rr);
            let (g, st) = requester_chain(LedgerKind::Multisig, &owner, &root, &mut rr);
            bootstrap.push(g);
            let h = home_keys.len();
            let targets = (0..h)
                .map(|k| Target {
                    requestee: home_keys[(i + k) % h].public(),
                    device: HOME_DEVICE,
                    action: s.load.action,
                })
                .collect();
            let node = RequesterNode::new(
                *id,
                first_obm,
                st,
                targets,
                SimDuration::from_secs_f64(s.load.timeout),
                stream(seed, "requester-node", i as u64),
            );
            nodes[id.0 as usize] = Node::Requester(Box::new(node));
        }

        nodes[layout.cloud.0 as usize] = Node::Cloud(Box::new(CloudStorage::new(layout.cloud, first_obm, cloud_key)));

        let boot = Block::new(Hash256::ZERO, first_obm, bootstrap, &obm_keys[0]);
        let active: Vec<NodeId> = layout.obms[..s.network.obms].to_vec();
        for (i, (id, key)) in layout.obms.iter().zip(obm_keys).enumerate() {
            let mut o = ObmState::new(
                *id,
                key,
                obm_pks.clone(),
                config.clone(),
                roots.clone(),
                burns.clone(),
                stream(seed, "obm", i as u64),
            );
            o.set_active(active.clone());
            o.install_bootstrap(boot.clone());
            if s.trust.initial_direct != 0 {
                for peer in &layout.obms {
                    if peer != id {
                        o.trust.set_direct(*peer, s.trust.initial_direct);
                    }
                }
            }
            nodes[id.0 as usize] = Node::Obm(Box::new(o));
        }

        let net = NetConfig { bandwidth_bps: bw, flood_data: s.network.flood_data, seed: child_seed(seed, "net", 0) };
        let mut engine = Engine::new(topology, nodes, net);
        engine.attach_members();
        if s.network.pin_members {
            engine.pinned = layout.homes.iter().chain(&layout.requesters).copied().collect();
        }
        engine.start_obms();

        let times = arrivals(&s.load.schedule, s.horizon);
        if !layout.requesters.is_empty() {
            for (k, t) in times.iter().enumerate() {
                let r = layout.requesters[k % layout.requesters.len()];
                engine.schedule_timer(r, SimTime::from_secs_f64(*t), Timer::Arrival);
            }
        }

        let mut w = World { engine, layout, max_e2e, scenario: s.clone(), attack_armed: false };
        if s.attack.as_ref().map(|a| a.start <= 0.0).unwrap_or(false) {
            w.arm_attack();
        }
        Ok(w)
    }

    fn arm_attack(&mut self) {
        self.attack_armed = true;
        let Some(a) = self.scenario.attack.clone() else { return };
        let Some(b) = a.obm_behavior() else { return };
        for id in a.compromised() {
            if let Some(o) = self.engine.obm_mut(id) {
                o.behavior = b.clone();
            }
        }
    }

    /// Advance to `t` seconds, switching the scripted attack on when due.
    pub fn run_to(&mut self, t: f64) {
        if let Some(start) = self.scenario.attack.as_ref().map(|a| a.start) {
            if !self.attack_armed && start < t {
                self.engine.run_until(SimTime::from_secs_f64(start));
                self.arm_attack();
            }
        }
        self.engine.run_until(SimTime::from_secs_f64(t));
    }

    pub fn run(mut self) -> RunOutput {
        let h = self.scenario.horizon;
        self.run_to(h);
        self.finish()
    }

    pub fn finish(self) -> RunOutput {
        let e = &self.engine;
        let heights: Vec<usize> = e.active_obms().map(|o| o.replica.height()).collect();
        let summary = RunSummary {
            name: self.scenario.name.clone(),
            seed: self.scenario.seed,
            max_e2e_ms: self.max_e2e.as_millis_f64(),
            active_obms: e.active.len(),
            chain_height_min: heights.iter().copied().min().unwrap_or(0),
            chain_height_max: heights.iter().copied().max().unwrap_or(0),
            chain_txs: e.active_obms().map(|o| o.replica.main().tx_count()).max().unwrap_or(0),
            requests_completed: e.requesters().map(|r| r.completed).sum(),
            packets_sent: e.metrics.packets.sent,
            packets_delivered: e.metrics.packets.delivered,
            packets_lost: e.metrics.packets.lost,
            events: e.events_processed,
        };
        let mut metrics = self.engine.metrics;
        if let Some(a) = &self.scenario.attack {
            if a.obm_behavior().is_none() {
                metrics.attacks.extend(crate::experiments::home_attack_rows(a.kind, self.scenario.seed));
            }
        }
        RunOutput { summary, metrics }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub seed: u64,
    pub max_e2e_ms: f64,
    pub active_obms: usize,
    pub chain_height_min: usize,
    pub chain_height_max: usize,
    pub chain_txs: usize,
    pub requests_completed: u64,
    pub packets_sent: u64,
    pub packets_delivered: u64,
    pub packets_lost: u64,
    pub events: u64,
}

pub struct RunOutput {
    pub summary: RunSummary,
    pub metrics: MetricsBundle,
}

impl RunOutput {
    pub fn csv_files(&self) -> Vec<(String, String)> {
        let mut files = self.metrics.to_csv_files();
        files.push(("summary.csv".into(), crate::metrics::to_csv(std::slice::from_ref(&self.summary))));
        files
    }
}

pub fn run(s: &Scenario) -> Result<RunOutput, ScenarioError> {
    Ok(World::build(s)?.run())
}

/// Attack kinds that play out inside a home or on single transactions
/// rather than through overlay traffic.
pub fn is_home_attack(kind: AttackKind) -> bool {
    matches!(
        kind,
        AttackKind::FalseReputation | AttackKind::Modification | AttackKind::DeviceInjection | AttackKind::LinkingProbe
    )
}
