//! Throughput management: utilization sampling, consensus-period and OBM-count
//! recomputation, and the majority-signature agreement on the resulting action.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::Enc;
use crate::crypto::{verify, KeyPair, PublicKey, Signature};
use crate::ids::ObmId;
use crate::rng::SimRng;
use crate::time::{SimDuration, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "seconds")]
pub enum RateEstimator {
    /// Average over the whole elapsed sampling window.
    WholePeriod,
    /// Average over the most recent half of the window.
    TrailingHalfPeriod,
    /// Average over a fixed trailing span.
    TrailingWindow(f64),
}

/// What the utilization is measured against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilizationBasis {
    /// generated / appended over the window.
    Measured,
    /// Estimated load over the chain's capacity in the window: R * cp / (t_max * M).
    Capacity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtmConfig {
    pub enabled: bool,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub cp_min: SimDuration,
    pub cp_max: SimDuration,
    pub t_max: usize,
    /// Overlay size; upper bound for recomputed M.
    pub n_nodes: usize,
    pub estimator: RateEstimator,
    pub basis: UtilizationBasis,
    /// Delay between a sample and the instant its agreed action takes effect.
    /// Votes still undecided by then go to the election fallback.
    pub activation_delay: SimDuration,
}

impl DtmConfig {
    pub fn alpha_mid(&self) -> f64 {
        (self.alpha_min + self.alpha_max) / 2.0
    }

    pub fn for_delay(max_e2e: SimDuration, t_max: usize, n_nodes: usize) -> Self {
        DtmConfig {
            enabled: true,
            alpha_min: 0.25,
            alpha_max: 1.0,
            cp_min: max_e2e.mul(2),
            cp_max: SimDuration::from_secs(600),
            t_max,
            n_nodes,
            estimator: RateEstimator::TrailingHalfPeriod,
            basis: UtilizationBasis::Measured,
            activation_delay: max_e2e.mul(6),
        }
    }
}

/// generated / appended, saturating when nothing was appended.
pub fn compute_alpha(generated: u64, appended: u64) -> f64 {
    if appended == 0 {
        if generated == 0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        generated as f64 / appended as f64
    }
}

pub fn round_half(x: f64) -> f64 {
    (x * 2.0).round() / 2.0
}

/// Utilization relation solved for the consensus period with alpha at the midpoint, in seconds,
/// rounded to the nearest half second. `None` when the network is idle.
pub fn recompute_cp(cfg: &DtmConfig, rate: f64, m: usize) -> Option<f64> {
    if rate <= 0.0 || !rate.is_finite() {
        return None;
    }
    Some(round_half(cfg.alpha_mid() * cfg.t_max as f64 * m as f64 / rate))
}

/// Utilization relation solved for M with the consensus period at its default.
pub fn recompute_m(cfg: &DtmConfig, rate: f64) -> usize {
    if rate <= 0.0 || !rate.is_finite() {
        return 1;
    }
    let m = (rate * cfg.cp_max.as_secs_f64() / (cfg.alpha_mid() * cfg.t_max as f64)).ceil();
    (m as usize).clamp(1, cfg.n_nodes.max(1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtmDecision {
    NoAction,
    SetConsensusPeriod(SimDuration),
    Recluster { m: u32, cp: SimDuration },
}

impl DtmDecision {
    pub fn label(&self) -> String {
        match self {
            DtmDecision::NoAction => "none".into(),
            DtmDecision::SetConsensusPeriod(c) => format!("set_cp:{}", c.as_secs_f64()),
            DtmDecision::Recluster { m, cp } => format!("recluster:{}@{}", m, cp.as_secs_f64()),
        }
    }

    fn encode(&self, e: &mut Enc) {
        match self {
            DtmDecision::NoAction => {
                e.u8(0);
            }
            DtmDecision::SetConsensusPeriod(c) => {
                e.u8(1).u64(c.0);
            }
            DtmDecision::Recluster { m, cp } => {
                e.u8(2).u32(*m).u64(cp.0);
            }
        }
    }
}

/// Throughput decision for one sample. Actions that would not move the controller in the required
/// direction are reported as no action.
pub fn decide(cfg: &DtmConfig, alpha: f64, rate: f64, current_cp: SimDuration, m: usize) -> DtmDecision {
    let high = alpha > cfg.alpha_max;
    let low = alpha < cfg.alpha_min;
    if !high && !low {
        return DtmDecision::NoAction;
    }
    let Some(cp_new) = recompute_cp(cfg, rate, m) else {
        return DtmDecision::NoAction;
    };
    let cp_new_d = SimDuration::from_secs_f64(cp_new);
    if high {
        if cfg.cp_min <= cp_new_d {
            if cp_new_d < current_cp {
                return DtmDecision::SetConsensusPeriod(cp_new_d);
            }
            return DtmDecision::NoAction;
        }
        let m_new = recompute_m(cfg, rate);
        if m_new > m {
            return DtmDecision::Recluster { m: m_new as u32, cp: cfg.cp_max };
        }
        DtmDecision::NoAction
    } else {
        if cp_new_d <= cfg.cp_max {
            if cp_new_d > current_cp {
                return DtmDecision::SetConsensusPeriod(cp_new_d);
            }
            return DtmDecision::NoAction;
        }
        let m_new = recompute_m(cfg, rate);
        if m_new < m {
            return DtmDecision::Recluster { m: m_new as u32, cp: cfg.cp_max };
        }
        DtmDecision::NoAction
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UtilizationSample {
    pub window: (SimTime, SimTime),
    pub generated: u64,
    pub appended: u64,
    /// Estimated aggregate arrival rate, tx/s.
    pub rate: f64,
    /// Utilization under the configured basis.
    pub alpha: f64,
    /// generated / appended, regardless of basis.
    pub measured_alpha: f64,
}

/// Timestamped counts kept by each OBM between samples.
#[derive(Clone, Debug, Default)]
pub struct UtilizationMeter {
    generated: Vec<SimTime>,
    appended: Vec<(SimTime, u64)>,
}

impl UtilizationMeter {
    pub fn on_generated(&mut self, t: SimTime) {
        self.generated.push(t);
    }

    pub fn on_appended(&mut self, t: SimTime, n: u64) {
        if n > 0 {
            self.appended.push((t, n));
        }
    }

    fn generated_in(&self, from: SimTime, to: SimTime) -> u64 {
        self.generated.iter().filter(|t| **t > from && **t <= to).count() as u64
    }

    fn appended_in(&self, from: SimTime, to: SimTime) -> u64 {
        self.appended.iter().filter(|(t, _)| *t > from && *t <= to).map(|(_, n)| *n).sum()
    }

    pub fn sample(&self, cfg: &DtmConfig, start: SimTime, end: SimTime, cp: SimDuration, m: usize) -> UtilizationSample {
        let generated = self.generated_in(start, end);
        let appended = self.appended_in(start, end);
        let span = end.since(start);
        let rate_from = match cfg.estimator {
            RateEstimator::WholePeriod => start,
            RateEstimator::TrailingHalfPeriod => end.saturating_sub(SimDuration(span.0 / 2)),
            RateEstimator::TrailingWindow(w) => end.saturating_sub(SimDuration::from_secs_f64(w)).max(start),
        };
        let rate_span = end.since(rate_from).as_secs_f64();
        let rate = if rate_span > 0.0 { self.generated_in(rate_from, end) as f64 / rate_span } else { 0.0 };
        let measured_alpha = compute_alpha(generated, appended);
        let alpha = match cfg.basis {
            UtilizationBasis::Measured => measured_alpha,
            UtilizationBasis::Capacity => rate * cp.as_secs_f64() / (cfg.t_max as f64 * m as f64),
        };
        UtilizationSample { window: (start, end), generated, appended, rate, alpha, measured_alpha }
    }
}

/// A proposal or co-signature bundle for one sampling window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DtmMsg {
    pub window: u64,
    pub decision: DtmDecision,
    pub proposer: ObmId,
    pub sigs: Vec<(ObmId, Signature)>,
}

impl DtmMsg {
    pub fn wire_len(&self) -> usize {
        8 + 21 + 4 + 4 + self.sigs.len() * (4 + 68)
    }
}

pub fn vote_body(window: u64, decision: &DtmDecision) -> Vec<u8> {
    let mut e = Enc::tagged(b"lsb/dtm/vote");
    e.u64(window);
    decision.encode(&mut e);
    e.finish()
}

/// Output of an agreement step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RoundOut {
    Propose(DtmMsg),
    Cosign(DtmMsg),
}

/// One node's view of the agreement for one window.
#[derive(Clone, Debug)]
pub struct AgreementRound {
    pub window: u64,
    pub me: ObmId,
    /// Active OBM count when the window closed.
    pub m: usize,
    pub own: DtmDecision,
    /// Recomputed period and count this node considers plausible for a peer proposal.
    pub plausible_cp: Option<SimDuration>,
    pub plausible_m: usize,
    signed: bool,
    votes: BTreeMap<DtmDecision, BTreeMap<ObmId, Signature>>,
    proposers: BTreeMap<DtmDecision, BTreeSet<ObmId>>,
    pub decided: Option<(DtmDecision, bool)>,
    pub suspects: BTreeSet<ObmId>,
}

impl AgreementRound {
    pub fn new(window: u64, me: ObmId, m: usize, own: DtmDecision) -> Self {
        AgreementRound {
            window,
            me,
            m,
            own,
            plausible_cp: None,
            plausible_m: m,
            signed: false,
            votes: BTreeMap::new(),
            proposers: BTreeMap::new(),
            decided: None,
            suspects: BTreeSet::new(),
        }
    }

    pub fn has_signed(&self) -> bool {
        self.signed
    }

    pub fn signatures(&self, d: &DtmDecision) -> usize {
        self.votes.get(d).map(|v| v.len()).unwrap_or(0)
    }

    fn sign(&mut self, key: &KeyPair, d: DtmDecision) -> Vec<(ObmId, Signature)> {
        self.signed = true;
        let sig = key.sign(&vote_body(self.window, &d));
        let set = self.votes.entry(d).or_default();
        set.insert(self.me, sig);
        self.check_majority();
        set_to_vec(self.votes.get(&d).expect("just inserted"))
    }

    fn check_majority(&mut self) {
        if self.decided.is_some() {
            return;
        }
        for (d, v) in &self.votes {
            if 2 * v.len() > self.m {
                self.decided = Some((*d, false));
                return;
            }
        }
    }

    /// The waiting timer fired: propose our own decision unless already signed.
    pub fn on_propose_timer(&mut self, key: &KeyPair) -> Option<RoundOut> {
        if self.signed {
            return None;
        }
        let own = self.own;
        let sigs = self.sign(key, own);
        self.proposers.entry(own).or_default().insert(self.me);
        Some(RoundOut::Propose(DtmMsg { window: self.window, decision: own, proposer: self.me, sigs }))
    }

    fn plausible(&self, d: &DtmDecision, cp_max: SimDuration) -> bool {
        let step = SimDuration::from_millis(500);
        match d {
            DtmDecision::NoAction => true,
            DtmDecision::SetConsensusPeriod(c) => match self.plausible_cp {
                Some(p) => c.0.abs_diff(p.0) <= step.0 || *c == cp_max,
                None => *d == self.own,
            },
            DtmDecision::Recluster { m, .. } => (*m as usize).abs_diff(self.plausible_m) <= 1,
        }
    }

    /// Merge a received bundle; co-sign if it matches our decision, otherwise
    /// counter-propose once.
    pub fn on_message(
        &mut self,
        msg: &DtmMsg,
        keys: &BTreeMap<ObmId, PublicKey>,
        key: &KeyPair,
        cp_max: SimDuration,
    ) -> Vec<RoundOut> {
        if msg.window != self.window {
            return Vec::new();
        }
        let body = vote_body(self.window, &msg.decision);
        let mut valid = Vec::new();
        for (id, sig) in &msg.sigs {
            if let Some(pk) = keys.get(id) {
                if verify(pk, &body, sig) {
                    valid.push((*id, *sig));
                }
            }
        }
        if valid.is_empty() {
            return Vec::new();
        }
        if !self.plausible(&msg.decision, cp_max) {
            for (id, _) in &valid {
                self.suspects.insert(*id);
            }
        }
        self.proposers.entry(msg.decision).or_default().insert(msg.proposer);
        let set = self.votes.entry(msg.decision).or_default();
        for (id, sig) in valid {
            set.insert(id, sig);
        }
        self.check_majority();
        let mut out = Vec::new();
        if !self.signed {
            if msg.decision == self.own {
                let sigs = self.sign(key, msg.decision);
                out.push(RoundOut::Cosign(DtmMsg { window: self.window, decision: msg.decision, proposer: msg.proposer, sigs }));
            } else if let Some(RoundOut::Propose(p)) = self.on_propose_timer(key) {
                out.push(RoundOut::Propose(p));
            }
        }
        out
    }

    /// No majority in time: the highest-id proposer among plausible action
    /// proposals wins, provided more than half of the OBMs voted for some action.
    pub fn on_timeout(&mut self) -> DtmDecision {
        if let Some((d, _)) = self.decided {
            return d;
        }
        let mut action_voters = BTreeSet::new();
        let mut best: Option<(ObmId, DtmDecision)> = None;
        for (d, v) in &self.votes {
            if *d == DtmDecision::NoAction {
                continue;
            }
            let suspicious = v.keys().all(|id| self.suspects.contains(id));
            if suspicious {
                continue;
            }
            action_voters.extend(v.keys().copied());
            if let Some(top) = self.proposers.get(d).and_then(|p| p.iter().max()) {
                if best.map(|(b, _)| *top > b).unwrap_or(true) {
                    best = Some((*top, *d));
                }
            }
        }
        let d = match best {
            Some((_, d)) if 2 * action_voters.len() > self.m => d,
            _ => DtmDecision::NoAction,
        };
        self.decided = Some((d, true));
        d
    }
}

fn set_to_vec(m: &BTreeMap<ObmId, Signature>) -> Vec<(ObmId, Signature)> {
    m.iter().map(|(k, v)| (*k, *v)).collect()
}

/// Result of an isolated agreement run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgreementResult {
    /// Decision applied by each participant, in id order.
    pub applied: Vec<(ObmId, DtmDecision, bool)>,
    pub suspects: BTreeMap<ObmId, BTreeSet<ObmId>>,
}

/// Run one agreement window among `decisions.len()` OBMs over a full mesh with
/// uniform per-message latency in `[lat_min, lat_max]` and optional loss.
pub fn run_agreement(
    window: u64,
    decisions: &[(ObmId, DtmDecision)],
    keys: &BTreeMap<ObmId, KeyPair>,
    max_e2e: SimDuration,
    loss: f64,
    rng: &mut SimRng,
) -> AgreementResult {
    let m = decisions.len();
    let pks: BTreeMap<ObmId, PublicKey> = keys.iter().map(|(k, v)| (*k, v.public())).collect();
    let mut rounds: BTreeMap<ObmId, AgreementRound> =
        decisions.iter().map(|(id, d)| (*id, AgreementRound::new(window, *id, m, *d))).collect();
    // (time, seq, destination, message or timer)
    let mut queue: BTreeMap<(SimTime, u64), (ObmId, Option<DtmMsg>)> = BTreeMap::new();
    let mut seq = 0u64;
    for (id, _) in decisions {
        let t = SimTime(rng.gen_range(0..=max_e2e.0));
        queue.insert((t, seq), (*id, None));
        seq += 1;
    }
    let cp_max = SimDuration::from_secs(600);
    let lat_min = (max_e2e.0 / 10).max(1);
    while let Some(((now, _), (dst, msg))) = queue.pop_first() {
        let round = rounds.get_mut(&dst).expect("participant");
        let key = &keys[&dst];
        let outs = match msg {
            None => round.on_propose_timer(key).into_iter().collect(),
            Some(m) => round.on_message(&m, &pks, key, cp_max),
        };
        for o in outs {
            let m = match o {
                RoundOut::Propose(m) | RoundOut::Cosign(m) => m,
            };
            for (peer, _) in decisions {
                if *peer == dst || rng.gen_bool(loss.clamp(0.0, 1.0)) {
                    continue;
                }
                let t = now + SimDuration(rng.gen_range(lat_min..=max_e2e.0.max(lat_min)));
                queue.insert((t, seq), (*peer, Some(m.clone())));
                seq += 1;
            }
        }
    }
    let mut applied = Vec::new();
    let mut suspects = BTreeMap::new();
    for (id, r) in rounds.iter_mut() {
        let d = r.on_timeout();
        let fallback = r.decided.map(|(_, f)| f).unwrap_or(false);
        applied.push((*id, d, fallback));
        suspects.insert(*id, r.suspects.clone());
    }
    AgreementResult { applied, suspects }
}
