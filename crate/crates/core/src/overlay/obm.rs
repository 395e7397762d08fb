//! The OBM state machine. Handlers map (state, event) to an [`Outbox`]; the
//! engine owns delivery and time.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{fake_transaction, tamper_signature, FakeKind, ObmBehavior};
use crate::crypto::{Hash256, KeyPair, PublicKey};
use crate::dtm::{decide, recompute_cp, recompute_m, AgreementRound, DtmConfig, DtmDecision, DtmMsg, RoundOut, UtilizationMeter};
use crate::ids::{NodeId, ObmId};
use crate::ledger::verify::{check_chain_tx, VerifyContext};
use crate::ledger::{Block, ChainTx, ChainView, MockBurnLedger, MultisigTransaction, StagedView, TrustRoots, TxRejection};
use crate::metrics::{secs, BlockRow, DtmAppliedRow, DtmTraceRow, MetricEvent, TrustRow, VerificationRow};
use crate::netsim::message::{KeyControl, Message, Outbox, Out, Timer, Vouch};
use crate::overlay::compliance::{ComplianceConfig, ComplianceMonitor, CpHistory, Verdict};
use crate::overlay::keylist::{KeyList, KeyListEntry, KeyRequester};
use crate::overlay::pool::TransactionPool;
use crate::overlay::replica::{ChainReplica, InsertOutcome};
use crate::overlay::sampling::{block_stream, sample_indices, sample_size};
use crate::overlay::trust::{TrustConfig, TrustTable};
use crate::rng::SimRng;
use crate::time::{SimDuration, SimTime};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    pub t_max: usize,
    /// Initial consensus period.
    pub consensus_period: SimDuration,
    pub max_e2e: SimDuration,
    pub compliance: ComplianceConfig,
}

impl ConsensusConfig {
    /// Compliance slack defaults to one end-to-end delay so that latency
    /// differences between consecutive blocks never look like a violation.
    pub fn new(t_max: usize, consensus_period: SimDuration, max_e2e: SimDuration) -> Self {
        ConsensusConfig {
            t_max,
            consensus_period,
            max_e2e,
            compliance: ComplianceConfig { slack: max_e2e, ..ComplianceConfig::default() },
        }
    }

    pub fn max_waiting(&self) -> SimDuration {
        self.max_e2e.mul(2)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObmConfig {
    pub consensus: ConsensusConfig,
    pub trust: TrustConfig,
    pub dtm: DtmConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    Deliver(NodeId),
    Broadcast,
    Drop,
}

/// Where a half-signed transaction goes: to a member the key list lets it
/// reach, to the other OBMs when the requestee is elsewhere, or nowhere.
pub fn route_transaction(keylist: &KeyList, members: &BTreeMap<PublicKey, NodeId>, tx: &MultisigTransaction) -> Route {
    match members.get(&tx.requestee_pk) {
        Some(n) if keylist.allows(&tx.requester_pk, &tx.requestee_pk) => Route::Deliver(*n),
        Some(_) => Route::Drop,
        None => Route::Broadcast,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum BlockReject {
    #[error("unknown generator")]
    UnknownGenerator,
    #[error("generator signature invalid")]
    BadGeneratorSig,
    #[error("non-compliant: {0:?}")]
    NonCompliant(Verdict),
    #[error("block size {0} outside [1, t_max]")]
    BadSize(usize),
    #[error("duplicate transaction")]
    DuplicateTx,
    #[error("transaction {index} failed: {reason}")]
    BadTransaction { index: usize, reason: TxRejection },
}

impl BlockReject {
    pub fn label(&self) -> &'static str {
        match self {
            BlockReject::UnknownGenerator => "unknown_generator",
            BlockReject::BadGeneratorSig => "bad_generator_sig",
            BlockReject::NonCompliant(Verdict::TooSoon) => "too_soon",
            BlockReject::NonCompliant(_) => "too_many_early",
            BlockReject::BadSize(_) => "bad_size",
            BlockReject::DuplicateTx => "duplicate_tx",
            BlockReject::BadTransaction { .. } => "fake_tx",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VerifyReport {
    pub ptv: u32,
    /// Transaction checks run.
    pub executed: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BlockVerdict {
    Accepted(VerifyReport),
    Rejected(BlockReject),
    Orphaned,
    Known,
}

#[derive(Debug)]
struct DtmRuntime {
    cfg: DtmConfig,
    meter: UtilizationMeter,
    window_start: SimTime,
    rounds: BTreeMap<u64, (SimTime, AgreementRound)>,
    early: Vec<DtmMsg>,
}

#[derive(Debug)]
pub struct ObmState {
    pub id: ObmId,
    key: KeyPair,
    pub obm_keys: BTreeMap<ObmId, PublicKey>,
    pub active: Vec<ObmId>,
    pub members: BTreeMap<PublicKey, NodeId>,
    pub keylist: KeyList,
    pub pool: TransactionPool,
    pub trust: TrustTable,
    pub replica: ChainReplica,
    pub compliance: ComplianceMonitor,
    pub cp_history: CpHistory,
    pub config: ObmConfig,
    pub behavior: ObmBehavior,
    pub last_own_block: Option<SimTime>,
    last_own_txs: Vec<ChainTx>,
    last_own_parent: Hash256,
    roots: TrustRoots,
    burns: MockBurnLedger,
    rng: SimRng,
    tx_receipt: HashMap<Hash256, SimTime>,
    counted: HashSet<Hash256>,
    rejected: HashSet<Hash256>,
    pending_sigs: HashMap<Hash256, Vec<Vouch>>,
    waiting: Option<u64>,
    epoch: u64,
    recheck_at: Option<SimTime>,
    dtm: DtmRuntime,
}

impl ObmState {
    pub fn new(
        id: ObmId,
        key: KeyPair,
        obm_keys: BTreeMap<ObmId, PublicKey>,
        config: ObmConfig,
        roots: TrustRoots,
        burns: MockBurnLedger,
        rng: SimRng,
    ) -> Self {
        let active = obm_keys.keys().copied().collect();
        ObmState {
            id,
            key,
            obm_keys,
            active,
            members: BTreeMap::new(),
            keylist: KeyList::default(),
            pool: TransactionPool::default(),
            trust: TrustTable::new(config.trust.clone()),
            replica: ChainReplica::new(),
            compliance: ComplianceMonitor::default(),
            cp_history: CpHistory::new(config.consensus.consensus_period),
            dtm: DtmRuntime {
                cfg: config.dtm.clone(),
                meter: UtilizationMeter::default(),
                window_start: SimTime::ZERO,
                rounds: BTreeMap::new(),
                early: Vec::new(),
            },
            config,
            behavior: ObmBehavior::Honest,
            last_own_block: None,
            last_own_txs: Vec::new(),
            last_own_parent: Hash256::ZERO,
            roots,
            burns,
            rng,
            tx_receipt: HashMap::new(),
            counted: HashSet::new(),
            rejected: HashSet::new(),
            pending_sigs: HashMap::new(),
            waiting: None,
            epoch: 0,
            recheck_at: None,
        }
    }

    pub fn public_key(&self) -> PublicKey {
        self.key.public()
    }

    pub fn is_active(&self) -> bool {
        self.active.contains(&self.id)
    }

    pub fn consensus_period(&self, now: SimTime) -> SimDuration {
        self.cp_history.at(now)
    }

    /// Replace the node's random stream. Lets a harness replay the same
    /// sampling draws under different trust settings.
    pub fn reseed(&mut self, rng: SimRng) {
        self.rng = rng;
    }

    /// Install the pre-agreed first block without verification.
    pub fn install_bootstrap(&mut self, block: Block) {
        self.replica.insert(block);
    }

    pub fn set_active(&mut self, active: Vec<ObmId>) {
        self.active = active;
    }

    pub fn register_member(&mut self, pk: PublicKey, node: NodeId) {
        self.members.insert(pk, node);
    }

    pub fn start(&mut self, now: SimTime) -> Outbox {
        let mut out = Outbox::default();
        if self.dtm.cfg.enabled {
            self.dtm.window_start = now;
            out.timer(now + self.cp_history.at(now), Timer::DtmSample(0));
        }
        out
    }

    pub fn on_message(&mut self, now: SimTime, from: NodeId, msg: Message) -> Outbox {
        let mut out = Outbox::default();
        match msg {
            Message::TxSubmit { tx, reply_to } => {
                if self.behavior == ObmBehavior::Dropping {
                    out.metric(MetricEvent::event(now, self.id, "submission_dropped", Some(reply_to), 0.0));
                } else {
                    self.on_transaction(now, tx, reply_to, true, &mut out);
                }
            }
            Message::TxForward { tx, reply_to } => self.on_transaction(now, tx, reply_to, false, &mut out),
            Message::BlockAnnounce(b) => {
                self.handle_block(now, *b, &mut out);
            }
            Message::VouchNotice(v) => self.on_vouch(v),
            Message::DtmProposal(m) | Message::DtmCosign(m) => self.on_dtm_message(m, &mut out),
            Message::KeyControl(k) => self.on_key_control(from, k),
            _ => {}
        }
        out
    }

    fn on_key_control(&mut self, from: NodeId, k: KeyControl) {
        let owner_ok = |pk: &PublicKey, members: &BTreeMap<PublicKey, NodeId>| members.get(pk) == Some(&from);
        match k {
            KeyControl::Associate { member_pk } => {
                self.members.insert(member_pk, from);
            }
            KeyControl::AllowAll { requestee } if owner_ok(&requestee, &self.members) => {
                self.keylist.add(KeyListEntry { requester: KeyRequester::Broadcast, requestee });
            }
            KeyControl::Allow { requester, requestee } if owner_ok(&requestee, &self.members) => {
                self.keylist.add(KeyListEntry { requester: KeyRequester::Key(requester), requestee });
            }
            KeyControl::Deny { requester, requestee } if owner_ok(&requestee, &self.members) => {
                self.keylist.deny(requester, requestee);
            }
            _ => {}
        }
    }

    /// Routing for a received transaction. Completed transactions are pooled.
    pub fn on_transaction(&mut self, now: SimTime, tx: ChainTx, reply_to: NodeId, local: bool, out: &mut Outbox) {
        if tx.tx_id() != tx.compute_id() {
            out.metric(MetricEvent::event(now, self.id, "malformed_tx", Some(reply_to), 0.0));
            return;
        }
        if let ChainTx::Multisig(x) = &tx {
            if !x.is_complete() {
                match route_transaction(&self.keylist, &self.members, x) {
                    Route::Deliver(n) => out.unicast(n, Message::TxDeliver { tx: x.clone(), reply_to }),
                    Route::Broadcast if local => out.broadcast(Message::TxForward { tx, reply_to }),
                    Route::Broadcast => {}
                    Route::Drop => out.metric(MetricEvent::event(now, self.id, "keylist_drop", Some(reply_to), 0.0)),
                }
                return;
            }
        }
        let fresh = self.add_to_pool(now, tx.clone());
        if fresh && local {
            out.broadcast(Message::TxForward { tx, reply_to });
        }
        self.maybe_start_block(now, out);
    }

    fn add_to_pool(&mut self, now: SimTime, tx: ChainTx) -> bool {
        let id = tx.tx_id();
        if self.replica.main().contains_tx(&id) || self.pool.contains(&id) {
            return false;
        }
        self.tx_receipt.entry(id).or_insert(now);
        if self.counted.insert(id) {
            self.dtm.meter.on_generated(now);
        }
        self.pool.insert(tx, now)
    }

    /// Schedule a waiting period when the pool is full and the consensus
    /// period has elapsed. Returns the expiry if one was scheduled.
    pub fn maybe_start_block(&mut self, now: SimTime, out: &mut Outbox) -> Option<SimTime> {
        if !self.is_active() || self.waiting.is_some() || self.pool.len() < self.config.consensus.t_max {
            return None;
        }
        let cp = self.cp_history.at(now);
        if let Some(last) = self.last_own_block {
            let ready = last + cp;
            if now < ready {
                if self.recheck_at.map(|t| t > ready || t < now).unwrap_or(true) {
                    self.recheck_at = Some(ready);
                    out.timer(ready, Timer::Recheck);
                }
                return None;
            }
        }
        let mw = self.config.consensus.max_waiting().0.max(1);
        let wait = match self.behavior {
            ObmBehavior::EarlyBlocks => 0,
            _ => self.rng.gen_range(1..=mw),
        };
        self.epoch += 1;
        self.waiting = Some(self.epoch);
        let at = now + SimDuration(wait);
        out.timer(at, Timer::Waiting(self.epoch));
        Some(at)
    }

    /// Pick up to t_max pooled transactions whose predecessors are already on
    /// the chain or earlier in the selection, and sign a block over them.
    pub fn generate_block(&mut self, _now: SimTime) -> Option<Block> {
        let t_max = self.config.consensus.t_max;
        let main = self.replica.main();
        let mut chosen: Vec<ChainTx> = Vec::new();
        let mut ids: HashSet<Hash256> = HashSet::new();
        loop {
            let before = chosen.len();
            for e in self.pool.iter() {
                if chosen.len() == t_max {
                    break;
                }
                let id = e.tx.tx_id();
                if ids.contains(&id) {
                    continue;
                }
                let linked = match e.tx.prev_tx_id() {
                    None => true,
                    Some(p) => main.tx(&p).is_some() || ids.contains(&p),
                };
                if linked {
                    ids.insert(id);
                    chosen.push(e.tx.clone());
                }
            }
            if chosen.len() == t_max || chosen.len() == before {
                break;
            }
        }
        if chosen.is_empty() {
            return None;
        }
        if let ObmBehavior::Appending { fakes_per_block, fake } = self.behavior.clone() {
            self.insert_fakes(&mut chosen, fakes_per_block, fake);
        }
        Some(Block::new(self.replica.tip_hash(), self.id, chosen, &self.key))
    }

    fn insert_fakes(&mut self, chosen: &mut Vec<ChainTx>, fakes: usize, kind: FakeKind) {
        let t_max = self.config.consensus.t_max;
        let fakes = fakes.min(t_max);
        match kind {
            FakeKind::PkLink => {
                chosen.truncate(t_max - fakes);
                // Anchor on a transaction nothing else in the block spends, so the
                // fake fails only at its own key link and real ones stay valid.
                let spent: HashSet<Hash256> = chosen.iter().filter_map(|t| t.prev_tx_id()).collect();
                let anchor = self
                    .replica
                    .main()
                    .blocks()
                    .iter()
                    .rev()
                    .flat_map(|b| b.txs.iter())
                    .find(|t| !spent.contains(&t.tx_id()))
                    .cloned();
                let Some(anchor) = anchor else { return };
                for _ in 0..fakes {
                    let f = ChainTx::Multisig(fake_transaction(&anchor, &mut self.rng));
                    let pos = self.rng.gen_range(0..=chosen.len());
                    chosen.insert(pos, f);
                }
            }
            FakeKind::BadSignature => {
                let mut done = 0;
                for tx in chosen.iter_mut() {
                    if done == fakes {
                        break;
                    }
                    if let ChainTx::Multisig(x) = tx {
                        *tx = ChainTx::Multisig(tamper_signature(x));
                        done += 1;
                    }
                }
            }
        }
    }

    pub fn on_timer(&mut self, now: SimTime, timer: Timer) -> Outbox {
        let mut out = Outbox::default();
        match timer {
            Timer::Waiting(epoch) if self.waiting == Some(epoch) => {
                self.waiting = None;
                self.emit_own_block(now, &mut out, true);
                if let ObmBehavior::BreakingInterval { burst, gap } = self.behavior {
                    for i in 1..burst {
                        out.timer(now + gap.mul(i as u64), Timer::Burst(i));
                    }
                }
            }
            Timer::Burst(_) => {
                self.emit_own_block(now, &mut out, false);
            }
            Timer::Recheck => {
                if self.recheck_at.map(|t| t <= now).unwrap_or(false) {
                    self.recheck_at = None;
                }
                self.maybe_start_block(now, &mut out);
            }
            Timer::DtmSample(w) => self.dtm_sample(now, w, &mut out),
            Timer::DtmPropose(w) => {
                if let Some((_, r)) = self.dtm.rounds.get_mut(&w) {
                    if let Some(o) = r.on_propose_timer(&self.key) {
                        push_round_out(&mut out, o);
                    }
                }
            }
            Timer::DtmActivate(w) => self.dtm_activate(now, w, &mut out),
            _ => {}
        }
        out
    }

    fn emit_own_block(&mut self, now: SimTime, out: &mut Outbox, rate_limited: bool) {
        if rate_limited {
            if let Some(last) = self.last_own_block {
                if now < last + self.cp_history.at(now) {
                    return;
                }
            }
        }
        let (block, own_chain) = match self.generate_block(now) {
            Some(b) => (b, true),
            // A burst outruns the pool: re-send the last block's content in a
            // new order as a sibling. It never enters our own replica.
            None if !rate_limited && !self.last_own_txs.is_empty() => {
                let mut txs = self.last_own_txs.clone();
                txs.rotate_left(1);
                (Block::new(self.last_own_parent, self.id, txs, &self.key), false)
            }
            None => return,
        };
        self.last_own_txs = block.txs.clone();
        self.last_own_parent = block.header.prev_block_hash;
        let h = block.hash();
        out.metric(MetricEvent::Block(BlockRow {
            t: secs(now),
            observer: self.id.0,
            generator: self.id.0,
            event: if rate_limited { "generated" } else { "generated_burst" }.into(),
            detail: h.to_hex()[..16].to_string(),
            n_txs: block.txs.len(),
            bytes: block.to_bytes().len(),
        }));
        self.last_own_block = Some(now);
        if own_chain {
            let outcome = self.replica.insert(block.clone());
            self.apply_chain_change(now, outcome);
        }
        out.broadcast(Message::BlockAnnounce(Box::new(block)));
        let ready = now + self.cp_history.at(now);
        self.recheck_at = Some(ready);
        out.timer(ready, Timer::Recheck);
    }

    fn apply_chain_change(&mut self, now: SimTime, outcome: InsertOutcome) {
        for tx in &outcome.added {
            self.pool.remove(&tx.tx_id());
        }
        let removed = outcome.removed.len() as u64;
        for tx in outcome.removed {
            self.add_to_pool(now, tx);
        }
        self.dtm.meter.on_appended(now, (outcome.added.len() as u64).saturating_sub(removed));
    }

    fn trust_metric(&self, now: SimTime, peer: ObmId, delta: i64, reason: &str) -> MetricEvent {
        MetricEvent::Trust(TrustRow {
            t: secs(now),
            observer: self.id.0,
            peer: peer.0,
            delta,
            direct_after: self.trust.direct(peer).unwrap_or(0),
            reason: reason.into(),
        })
    }

    fn block_metric(&self, now: SimTime, block: &Block, event: &str, detail: &str) -> MetricEvent {
        MetricEvent::Block(BlockRow {
            t: secs(now),
            observer: self.id.0,
            generator: block.header.generator_id.0,
            event: event.into(),
            detail: detail.into(),
            n_txs: block.txs.len(),
            bytes: 0,
        })
    }

    /// Signature and rate compliance. A violation costs the generator one
    /// unit of direct trust.
    pub fn police(&mut self, now: SimTime, block: &Block, out: &mut Outbox) -> Result<(), BlockReject> {
        let gen = block.header.generator_id;
        let pk = self.obm_keys.get(&gen).ok_or(BlockReject::UnknownGenerator)?;
        if !block.generator_sig_valid(pk) {
            return Err(BlockReject::BadGeneratorSig);
        }
        let est_wait = block.txs.iter().filter_map(|t| self.tx_receipt.get(&t.tx_id())).max().map(|r| now.since(*r));
        let cc = &self.config.consensus;
        let cp = self.cp_history.min_over(now.saturating_sub(cc.max_e2e.mul(2)), now);
        let verdict = self.compliance.police(&cc.compliance, gen, now, cp, est_wait, cc.max_waiting());
        if verdict != Verdict::Compliant {
            self.trust.penalize(gen);
            out.metric(self.trust_metric(now, gen, -1, "non_compliant"));
            return Err(BlockReject::NonCompliant(verdict));
        }
        Ok(())
    }

    /// Structure and sampled transaction checks against the branch the block extends.
    pub fn check_content(&mut self, block: &Block) -> Result<VerifyReport, BlockReject> {
        let n = block.txs.len();
        if n == 0 || n > self.config.consensus.t_max {
            return Err(BlockReject::BadSize(n));
        }
        let view = self.replica.view_for_parent(&block.header.prev_block_hash);
        let mut seen = HashSet::new();
        for tx in &block.txs {
            let id = tx.compute_id();
            if !seen.insert(id) || view.tx(&id).is_some() {
                return Err(BlockReject::DuplicateTx);
            }
        }
        let ptv = self.trust.select_ptv(block.header.generator_id);
        let k = sample_size(ptv, n);
        let mut brng = block_stream(&mut self.rng);
        let mut sampled = vec![false; n];
        for i in sample_indices(n, k, &mut brng) {
            sampled[i] = true;
        }
        let ctx = VerifyContext { roots: &self.roots, burns: &self.burns };
        let mut staged = StagedView::new(&*view);
        for (i, tx) in block.txs.iter().enumerate() {
            if sampled[i] {
                check_chain_tx(tx, &staged, &ctx).map_err(|reason| BlockReject::BadTransaction { index: i, reason })?;
            }
            staged.stage(tx);
        }
        Ok(VerifyReport { ptv, executed: k })
    }

    /// Full verification of a peer block: police, then content.
    pub fn verify_block(&mut self, now: SimTime, block: &Block) -> Result<VerifyReport, BlockReject> {
        let mut sink = Outbox::default();
        self.police(now, block, &mut sink)?;
        self.check_content(block)
    }

    pub fn handle_block(&mut self, now: SimTime, block: Block, out: &mut Outbox) -> BlockVerdict {
        let h = block.hash();
        if self.replica.contains(&h) || self.rejected.contains(&h) || block.header.generator_id == self.id {
            return BlockVerdict::Known;
        }
        if let Err(r) = self.police(now, &block, out) {
            self.rejected.insert(h);
            out.metric(self.block_metric(now, &block, "rejected", r.label()));
            return BlockVerdict::Rejected(r);
        }
        if !self.replica.knows_parent(&block) {
            out.metric(self.block_metric(now, &block, "orphaned", ""));
            self.replica.add_orphan(block);
            return BlockVerdict::Orphaned;
        }
        self.process_content(now, block, out)
    }

    fn process_content(&mut self, now: SimTime, block: Block, out: &mut Outbox) -> BlockVerdict {
        let h = block.hash();
        let gen = block.header.generator_id;
        let direct_before = self.trust.direct(gen).unwrap_or(0);
        let result = self.check_content(&block);
        let (ptv, executed) = match &result {
            Ok(r) => (r.ptv, r.executed),
            Err(BlockReject::BadTransaction { .. }) => {
                let p = self.trust.select_ptv(gen);
                (p, sample_size(p, block.txs.len()))
            }
            Err(_) => (0, 0),
        };
        out.metric(MetricEvent::Verification(VerificationRow {
            t: secs(now),
            observer: self.id.0,
            generator: gen.0,
            direct_before,
            ptv,
            n_txs: block.txs.len(),
            executed,
            outcome: match &result {
                Ok(_) => "accepted".into(),
                Err(r) => r.label().into(),
            },
        }));
        let report = match result {
            Ok(r) => r,
            Err(r) => {
                self.rejected.insert(h);
                out.metric(self.block_metric(now, &block, "rejected", r.label()));
                return BlockVerdict::Rejected(r);
            }
        };
        let outcome = self.replica.insert(block.clone());
        self.apply_chain_change(now, outcome);
        self.trust.record_valid_block(gen);
        out.metric(self.trust_metric(now, gen, 1, "valid_block"));
        out.metric(self.block_metric(now, &block, "accepted", ""));
        let vouch = Vouch::new(self.id, gen, h, &self.key);
        self.replica.add_verifier_sig(&h, self.id, vouch.sig);
        for v in self.pending_sigs.remove(&h).unwrap_or_default() {
            self.replica.add_verifier_sig(&h, v.voucher, v.sig);
        }
        out.broadcast(Message::VouchNotice(vouch));
        for child in self.replica.take_orphans(&h) {
            self.process_content(now, child, out);
        }
        self.maybe_start_block(now, out);
        BlockVerdict::Accepted(report)
    }

    fn on_vouch(&mut self, v: Vouch) {
        if v.voucher == self.id {
            return;
        }
        let Some(pk) = self.obm_keys.get(&v.voucher) else {
            return;
        };
        if !v.valid(pk) {
            return;
        }
        let generator = self.replica.block(&v.block_hash).map(|b| b.header.generator_id).unwrap_or(v.generator);
        if generator != v.voucher {
            self.trust.record_vouch(v.voucher, generator);
        }
        if !self.replica.add_verifier_sig(&v.block_hash, v.voucher, v.sig) {
            self.pending_sigs.entry(v.block_hash).or_default().push(v);
        }
    }

    fn dtm_sample(&mut self, now: SimTime, w: u64, out: &mut Outbox) {
        if !self.is_active() {
            return;
        }
        let cfg = &self.dtm.cfg;
        let cp = self.cp_history.at(now);
        let m = self.active.len();
        let s = self.dtm.meter.sample(cfg, self.dtm.window_start, now, cp, m);
        let mut d = decide(cfg, s.alpha, s.rate, cp, m);
        if let ObmBehavior::ConsensusPeriodForge { cp } = self.behavior {
            d = DtmDecision::SetConsensusPeriod(cp);
        }
        out.metric(MetricEvent::Dtm(DtmTraceRow {
            t: secs(now),
            node: self.id.0,
            window: w,
            generated: s.generated,
            appended: s.appended,
            rate: s.rate,
            alpha: s.alpha,
            measured_alpha: s.measured_alpha,
            consensus_period: cp.as_secs_f64(),
            decision: d.label(),
        }));
        let mut round = AgreementRound::new(w, self.id, m, d);
        round.plausible_cp = recompute_cp(cfg, s.rate, m).map(SimDuration::from_secs_f64);
        round.plausible_m = recompute_m(cfg, s.rate);
        self.dtm.rounds.insert(w, (now, round));
        self.dtm.window_start = now;
        let wait = self.rng.gen_range(0..=self.config.consensus.max_e2e.0);
        out.timer(now + SimDuration(wait), Timer::DtmPropose(w));
        out.timer(now + self.dtm.cfg.activation_delay, Timer::DtmActivate(w));
        let early: Vec<DtmMsg> = std::mem::take(&mut self.dtm.early);
        for msg in early {
            self.on_dtm_message(msg, out);
        }
    }

    fn on_dtm_message(&mut self, msg: DtmMsg, out: &mut Outbox) {
        let cp_max = self.dtm.cfg.cp_max;
        match self.dtm.rounds.get_mut(&msg.window) {
            Some((_, r)) => {
                for o in r.on_message(&msg, &self.obm_keys, &self.key, cp_max) {
                    push_round_out(out, o);
                }
            }
            None => {
                let latest = self.dtm.rounds.keys().next_back().copied();
                if latest.map(|l| msg.window > l).unwrap_or(true) {
                    self.dtm.early.push(msg);
                }
            }
        }
    }

    fn dtm_activate(&mut self, now: SimTime, w: u64, out: &mut Outbox) {
        let Some((window_end, round)) = self.dtm.rounds.get_mut(&w) else {
            return;
        };
        let window_end = *window_end;
        let d = round.on_timeout();
        let fallback = round.decided.map(|(_, f)| f).unwrap_or(false);
        let signatures = round.signatures(&d);
        let suspects: Vec<ObmId> = round.suspects.iter().copied().collect();
        for s in suspects {
            if !self.trust.is_distrusted(s) {
                self.trust.distrust(s);
                out.metric(MetricEvent::event(now, self.id, "dtm_suspect", Some(s), w as f64));
            }
        }
        let mut cp = self.cp_history.at(now);
        match d {
            DtmDecision::NoAction => {}
            DtmDecision::SetConsensusPeriod(c) => {
                cp = c;
                self.cp_history.set(now, c);
            }
            DtmDecision::Recluster { m, cp: c } => {
                cp = c;
                self.cp_history.set(now, c);
                out.items.push(Out::Recluster { m: m as usize, at: now });
            }
        }
        out.metric(MetricEvent::DtmApplied(DtmAppliedRow {
            t: secs(now),
            node: self.id.0,
            window: w,
            action: d.label(),
            signatures,
            via_fallback: fallback,
        }));
        // Keep only recent rounds.
        self.dtm.rounds.retain(|k, _| *k + 2 > w);
        let next = (window_end + cp).max(now + SimDuration(1));
        out.timer(next, Timer::DtmSample(w + 1));
        if d != DtmDecision::NoAction {
            self.maybe_start_block(now, out);
        }
    }

}

fn push_round_out(out: &mut Outbox, o: RoundOut) {
    match o {
        RoundOut::Propose(m) => out.broadcast(Message::DtmProposal(m)),
        RoundOut::Cosign(m) => out.broadcast(Message::DtmCosign(m)),
    }
}
