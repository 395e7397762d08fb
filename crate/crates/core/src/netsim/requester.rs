//! A member that issues access requests to homes over the overlay, one at a time.

use std::collections::VecDeque;

use crate::crypto::{PublicKey, Signature};
use crate::ids::{DeviceId, NodeId};
use crate::ledger::{ActionKind, ChainTx, Metadata, MultisigTransaction, RequesterState};
use crate::metrics::MetricEvent;
use crate::netsim::message::{Message, Out, Outbox, Timer};
use crate::rng::SimRng;
use crate::time::{SimDuration, SimTime};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Target {
    pub requestee: PublicKey,
    pub device: DeviceId,
    pub action: ActionKind,
}

#[derive(Clone, Debug)]
struct Outstanding {
    tx: MultisigTransaction,
    issued: SimTime,
    attempt: u64,
}

#[derive(Debug)]
pub struct RequesterNode {
    pub id: NodeId,
    pub obm: NodeId,
    pub state: RequesterState,
    pub targets: Vec<Target>,
    /// How long to wait for an answer before asking to be re-attached.
    pub timeout: SimDuration,
    next_target: usize,
    backlog: VecDeque<SimTime>,
    outstanding: Option<Outstanding>,
    attempts: u64,
    pub completed: u64,
    pub accepted: u64,
    pub reattached: u64,
    rng: SimRng,
}

impl RequesterNode {
    pub fn new(id: NodeId, obm: NodeId, state: RequesterState, targets: Vec<Target>, timeout: SimDuration, rng: SimRng) -> Self {
        RequesterNode {
            id,
            obm,
            state,
            targets,
            timeout,
            next_target: 0,
            backlog: VecDeque::new(),
            outstanding: None,
            attempts: 0,
            completed: 0,
            accepted: 0,
            reattached: 0,
            rng,
        }
    }

    pub fn public_key(&self) -> PublicKey {
        self.state.active.public()
    }

    pub fn backlog(&self) -> usize {
        self.backlog.len() + self.outstanding.is_some() as usize
    }

    pub fn on_timer(&mut self, now: SimTime, timer: Timer) -> Outbox {
        let mut out = Outbox::default();
        match timer {
            Timer::Arrival => {
                self.backlog.push_back(now);
                self.issue(now, &mut out);
            }
            Timer::ServiceTimeout(a) => {
                if self.outstanding.as_ref().map(|o| o.attempt) == Some(a) {
                    out.metric(MetricEvent::event(now, self.id, "service_timeout", Some(self.obm), a as f64));
                    out.items.push(Out::Reattach { member: self.id, obm: self.obm });
                }
            }
            _ => {}
        }
        out
    }

    pub fn on_message(&mut self, now: SimTime, _from: NodeId, msg: Message) -> Outbox {
        let mut out = Outbox::default();
        let Message::DataPacket(p) = msg else {
            return out;
        };
        let Some(o) = &self.outstanding else {
            return out;
        };
        if !same_request(&o.tx, &p.tx.requester_sig) || !p.tx.is_complete() {
            return out;
        }
        let issued = o.issued;
        self.outstanding = None;
        let done = ChainTx::Multisig(p.tx);
        self.state.commit(&done, &mut self.rng);
        self.completed += 1;
        self.accepted += p.accepted as u64;
        out.metric(MetricEvent::event(now, self.id, "request_done", None, now.since(issued).as_millis_f64()));
        // Hand the finished transaction to our own OBM too, so the chain moves
        // on even when the requestee's OBM drops it.
        out.unicast(self.obm, Message::TxSubmit { tx: done, reply_to: self.id });
        self.issue(now, &mut out);
        out
    }

    /// Point at a new OBM and resend whatever is still unanswered.
    pub fn reattach(&mut self, now: SimTime, obm: NodeId) -> Outbox {
        let mut out = Outbox::default();
        self.obm = obm;
        self.reattached += 1;
        if let Some(o) = self.outstanding.take() {
            self.send(now, o.tx, o.issued, &mut out);
        }
        out
    }

    fn issue(&mut self, now: SimTime, out: &mut Outbox) {
        if self.outstanding.is_some() || self.targets.is_empty() {
            return;
        }
        let Some(arrived) = self.backlog.pop_front() else {
            return;
        };
        let t = self.targets[self.next_target % self.targets.len()].clone();
        self.next_target += 1;
        let meta = Metadata::new(t.action, t.device);
        let tx = self.state.request(t.requestee, &meta, &mut self.rng).expect("overlay keys convert for sealing");
        self.send(now, tx, arrived, out);
    }

    fn send(&mut self, now: SimTime, tx: MultisigTransaction, issued: SimTime, out: &mut Outbox) {
        self.attempts += 1;
        let attempt = self.attempts;
        out.unicast(self.obm, Message::TxSubmit { tx: ChainTx::Multisig(tx.clone()), reply_to: self.id });
        out.timer(now + self.timeout, Timer::ServiceTimeout(attempt));
        self.outstanding = Some(Outstanding { tx, issued, attempt });
    }
}

fn same_request(tx: &MultisigTransaction, sig: &Signature) -> bool {
    tx.requester_sig == *sig
}
