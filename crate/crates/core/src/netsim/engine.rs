//! The event loop. Packets travel hop by hop along shortest-latency routes and
//! queue at each transmitting node's NIC; handlers only ever see whole messages.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::ids::NodeId;
use crate::metrics::{secs, DelayRow, MetricEvent, MetricsBundle};
use crate::netsim::message::{Message, MessageKind, Out, Outbox, Timer};
use crate::netsim::requester::RequesterNode;
use crate::netsim::topology::Topology;
use crate::overlay::ObmState;
use crate::rng::{stream, SimRng};
use crate::smarthome::{CloudStorage, LbmState};
use crate::time::{SimDuration, SimTime};

pub enum Node {
    Obm(Box<ObmState>),
    Lbm(Box<LbmState>),
    Requester(Box<RequesterNode>),
    Cloud(Box<CloudStorage>),
    Idle,
}

impl Node {
    fn on_message(&mut self, now: SimTime, from: NodeId, msg: Message) -> Outbox {
        match self {
            Node::Obm(s) => s.on_message(now, from, msg),
            Node::Lbm(s) => s.on_message(now, from, msg),
            Node::Requester(s) => s.on_message(now, from, msg),
            Node::Cloud(s) => s.on_message(now, from, msg),
            Node::Idle => Outbox::default(),
        }
    }

    fn on_timer(&mut self, now: SimTime, t: Timer) -> Outbox {
        match self {
            Node::Obm(s) => s.on_timer(now, t),
            Node::Lbm(s) => s.on_timer(now, t),
            Node::Requester(s) => s.on_timer(now, t),
            Node::Cloud(_) | Node::Idle => Outbox::default(),
        }
    }

    /// The OBM this member is attached to.
    fn attached(&self) -> Option<NodeId> {
        match self {
            Node::Lbm(s) => Some(s.obm),
            Node::Requester(s) => Some(s.obm),
            Node::Cloud(s) => Some(s.obm),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    /// Per-NIC link rate, bits per second.
    pub bandwidth_bps: f64,
    /// Carry data packets over the overlay by flooding, as a baseline
    /// blockchain-based home would. Off means data goes point to point.
    pub flood_data: bool,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { bandwidth_bps: 100e6, flood_data: false, seed: 0 }
    }
}

/// Where a flooded data packet is on its way through the overlay.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Flood {
    Up,
    Across,
    Down,
}

#[derive(Debug)]
struct Packet {
    origin: NodeId,
    final_dst: NodeId,
    msg: Message,
    size: usize,
    flood: Option<(Flood, NodeId)>,
}

#[derive(Debug)]
enum Payload {
    Timer(Timer),
    Packet(Packet),
}

const CONTROL: usize = 0;
const DATA: usize = 1;

fn queue_for(kind: MessageKind, flooded: bool) -> usize {
    match kind {
        MessageKind::DataPacket | MessageKind::StoreRequest if !flooded => DATA,
        _ => CONTROL,
    }
}

pub struct Engine {
    pub now: SimTime,
    pub topology: Topology,
    pub nodes: Vec<Node>,
    pub metrics: MetricsBundle,
    pub config: NetConfig,
    /// Label under which transmitted bytes are accounted.
    pub phase: String,
    heap: BinaryHeap<Reverse<(SimTime, NodeId, u64)>>,
    payloads: HashMap<u64, Payload>,
    seq: u64,
    nic_free: Vec<[SimTime; 2]>,
    rng: SimRng,
    /// OBM-capable nodes in promotion order.
    pub candidates: Vec<NodeId>,
    pub active: Vec<NodeId>,
    /// Members that keep their OBM on reclustering.
    pub pinned: BTreeSet<NodeId>,
    tried: BTreeMap<NodeId, BTreeSet<NodeId>>,
    last_recluster: Option<(usize, SimTime)>,
    pub events_processed: u64,
}

impl Engine {
    pub fn new(topology: Topology, nodes: Vec<Node>, config: NetConfig) -> Self {
        assert_eq!(topology.len(), nodes.len(), "one topology vertex per node");
        let candidates: Vec<NodeId> = nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n, Node::Obm(_)))
            .map(|(i, _)| NodeId(i as u32))
            .collect();
        let active = candidates
            .iter()
            .copied()
            .filter(|id| matches!(&nodes[id.0 as usize], Node::Obm(o) if o.is_active()))
            .collect();
        let n = nodes.len();
        Engine {
            now: SimTime::ZERO,
            topology,
            nodes,
            metrics: MetricsBundle::default(),
            rng: stream(config.seed, "engine", 0),
            config,
            phase: "run".into(),
            heap: BinaryHeap::new(),
            payloads: HashMap::new(),
            seq: 0,
            nic_free: vec![[SimTime::ZERO; 2]; n],
            candidates,
            active,
            pinned: BTreeSet::new(),
            tried: BTreeMap::new(),
            last_recluster: None,
            events_processed: 0,
        }
    }

    pub fn obm(&self, id: NodeId) -> Option<&ObmState> {
        match self.nodes.get(id.0 as usize)? {
            Node::Obm(o) => Some(o),
            _ => None,
        }
    }

    pub fn obm_mut(&mut self, id: NodeId) -> Option<&mut ObmState> {
        match self.nodes.get_mut(id.0 as usize)? {
            Node::Obm(o) => Some(o),
            _ => None,
        }
    }

    pub fn lbm(&self, id: NodeId) -> Option<&LbmState> {
        match self.nodes.get(id.0 as usize)? {
            Node::Lbm(o) => Some(o),
            _ => None,
        }
    }

    pub fn lbm_mut(&mut self, id: NodeId) -> Option<&mut LbmState> {
        match self.nodes.get_mut(id.0 as usize)? {
            Node::Lbm(o) => Some(o),
            _ => None,
        }
    }

    pub fn requester(&self, id: NodeId) -> Option<&RequesterNode> {
        match self.nodes.get(id.0 as usize)? {
            Node::Requester(o) => Some(o),
            _ => None,
        }
    }

    pub fn cloud(&self, id: NodeId) -> Option<&CloudStorage> {
        match self.nodes.get(id.0 as usize)? {
            Node::Cloud(o) => Some(o),
            _ => None,
        }
    }

    pub fn active_obms(&self) -> impl Iterator<Item = &ObmState> {
        self.active.iter().filter_map(|id| self.obm(*id))
    }

    pub fn requesters(&self) -> impl Iterator<Item = &RequesterNode> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Requester(r) => Some(&**r),
            _ => None,
        })
    }

    /// Attach every member to its nearest active OBM and let it announce
    /// itself. Pinned members keep their current OBM.
    pub fn attach_members(&mut self) {
        for i in 0..self.nodes.len() {
            let id = NodeId(i as u32);
            let Some(cur) = self.nodes[i].attached() else { continue };
            let obm = if self.pinned.contains(&id) { cur } else { self.topology.nearest(id, &self.active).unwrap_or(cur) };
            self.attach(id, obm);
        }
    }

    /// Move `member` to `obm` and let it announce itself there.
    pub fn attach(&mut self, member: NodeId, obm: NodeId) {
        let now = self.now;
        let out = match &mut self.nodes[member.0 as usize] {
            Node::Lbm(l) => l.associate(obm),
            Node::Requester(r) => {
                if r.obm == obm {
                    Outbox::default()
                } else {
                    r.reattach(now, obm)
                }
            }
            Node::Cloud(c) => {
                c.obm = obm;
                Outbox::default()
            }
            _ => Outbox::default(),
        };
        self.dispatch(member, out);
    }

    /// Start every active OBM's periodic duties.
    pub fn start_obms(&mut self) {
        for id in self.active.clone() {
            let now = self.now;
            let out = self.obm_mut(id).map(|o| o.start(now)).unwrap_or_default();
            self.dispatch(id, out);
        }
    }

    pub fn schedule_timer(&mut self, node: NodeId, at: SimTime, timer: Timer) {
        self.push(at.max(self.now), node, Payload::Timer(timer));
    }

    /// Apply a handler's output as if emitted by `from` at the current time.
    pub fn inject(&mut self, from: NodeId, out: Outbox) {
        self.dispatch(from, out);
    }

    /// Send `msg` from `from` to `to` right now.
    pub fn send(&mut self, from: NodeId, to: NodeId, msg: Message) {
        self.unicast(from, to, msg);
    }

    fn push(&mut self, at: SimTime, dst: NodeId, p: Payload) {
        self.seq += 1;
        self.payloads.insert(self.seq, p);
        self.heap.push(Reverse((at, dst, self.seq)));
    }

    pub fn pending_events(&self) -> usize {
        self.heap.len()
    }

    /// Process one event. False when the queue is empty or the next event
    /// lies beyond `until`.
    pub fn step(&mut self, until: SimTime) -> bool {
        let Some(Reverse((at, dst, seq))) = self.heap.peek().copied() else {
            return false;
        };
        if at > until {
            return false;
        }
        self.heap.pop();
        self.now = at;
        self.events_processed += 1;
        match self.payloads.remove(&seq).expect("every queued event has a payload") {
            Payload::Timer(t) => {
                let out = self.nodes[dst.0 as usize].on_timer(at, t);
                self.dispatch(dst, out);
            }
            Payload::Packet(p) => self.arrive(dst, p),
        }
        true
    }

    pub fn run_until(&mut self, until: SimTime) {
        while self.step(until) {}
        if self.now < until {
            self.now = until;
        }
    }

    fn dispatch(&mut self, from: NodeId, out: Outbox) {
        for item in out.items {
            match item {
                Out::Unicast { to, msg } => self.unicast(from, to, msg),
                Out::BroadcastObms { msg } => self.broadcast(from, msg),
                Out::Timer { at, timer } => self.schedule_timer(from, at, timer),
                Out::Metric(m) => self.metrics.push(m),
                Out::Reattach { member, obm } => self.reattach(member, obm),
                Out::Recluster { m, at } => self.recluster(m, at),
            }
        }
    }

    fn unicast(&mut self, from: NodeId, to: NodeId, msg: Message) {
        let size = msg.wire_size();
        self.metrics.packets.sent += 1;
        let flood = if self.config.flood_data && msg.kind() == MessageKind::DataPacket && self.obm(from).is_none() {
            self.nodes[from.0 as usize].attached().map(|o| (o, (Flood::Up, to)))
        } else {
            None
        };
        let pkt = match flood {
            Some((obm, tag)) => Packet { origin: from, final_dst: obm, msg, size, flood: Some(tag) },
            None => Packet { origin: from, final_dst: to, msg, size, flood: None },
        };
        self.transmit(from, pkt);
    }

    fn broadcast(&mut self, from: NodeId, msg: Message) {
        let mut peers: Vec<NodeId> = self.active.iter().copied().filter(|o| *o != from).collect();
        peers.shuffle(&mut self.rng);
        for p in peers {
            self.unicast(from, p, msg.clone());
        }
    }

    /// Put `pkt` on the wire at node `at`, toward its final destination.
    fn transmit(&mut self, at: NodeId, pkt: Packet) {
        if at == pkt.final_dst {
            self.push(self.now, at, Payload::Packet(pkt));
            return;
        }
        let Some(next) = self.topology.next_hop(at, pkt.final_dst) else {
            self.metrics.packets.lost += 1;
            self.metrics.push(MetricEvent::event(self.now, at, "route_failure", Some(pkt.final_dst), 0.0));
            return;
        };
        let link = *self.topology.link(at, next).expect("routes follow links");
        let q = queue_for(pkt.msg.kind(), pkt.flood.is_some());
        let free = &mut self.nic_free[at.0 as usize][q];
        let start = (*free).max(self.now);
        let done = start + SimDuration(((pkt.size as f64 * 8.0 / self.config.bandwidth_bps) * 1e6).ceil() as u64);
        *free = done;
        self.metrics.packets.record_hop(&self.phase, pkt.msg.kind(), at, pkt.size);
        if link.loss > 0.0 && self.rng.gen::<f64>() < link.loss {
            self.metrics.packets.lost += 1;
            return;
        }
        self.push(done + link.latency, next, Payload::Packet(pkt));
    }

    fn arrive(&mut self, at: NodeId, pkt: Packet) {
        if at != pkt.final_dst {
            self.transmit(at, pkt);
            return;
        }
        if let Some((stage, target)) = pkt.flood {
            self.flood_step(at, pkt, stage, target);
            return;
        }
        self.deliver(at, pkt.origin, pkt.msg, pkt.size);
    }

    fn flood_step(&mut self, at: NodeId, pkt: Packet, stage: Flood, target: NodeId) {
        let home = self.nodes.get(target.0 as usize).and_then(|n| n.attached());
        match stage {
            Flood::Down => self.deliver(at, pkt.origin, pkt.msg, pkt.size),
            Flood::Up | Flood::Across => {
                if stage == Flood::Up {
                    let mut peers: Vec<NodeId> = self.active.iter().copied().filter(|o| *o != at).collect();
                    peers.shuffle(&mut self.rng);
                    for p in peers {
                        let copy = Packet {
                            origin: pkt.origin,
                            final_dst: p,
                            msg: pkt.msg.clone(),
                            size: pkt.size,
                            flood: Some((Flood::Across, target)),
                        };
                        self.transmit(at, copy);
                    }
                }
                if home == Some(at) || home.is_none() && stage == Flood::Up {
                    let down = Packet { final_dst: target, flood: Some((Flood::Down, target)), ..pkt };
                    self.transmit(at, down);
                }
            }
        }
    }

    fn deliver(&mut self, at: NodeId, origin: NodeId, msg: Message, size: usize) {
        self.metrics.packets.delivered += 1;
        if let (Message::DataPacket(p), Node::Requester(_)) = (&msg, &self.nodes[at.0 as usize]) {
            self.metrics.push(MetricEvent::Delay(DelayRow {
                t: secs(self.now),
                from: origin.0,
                to: at.0,
                delay_ms: self.now.since(p.sent_at).as_millis_f64(),
                bytes: size,
                accepted: p.accepted,
            }));
        }
        let out = self.nodes[at.0 as usize].on_message(self.now, origin, msg);
        self.dispatch(at, out);
    }

    /// Move `member` to the nearest active OBM it has not tried yet.
    fn reattach(&mut self, member: NodeId, current: NodeId) {
        let tried = self.tried.entry(member).or_default();
        tried.insert(current);
        let mut options: Vec<NodeId> = self.active.iter().copied().filter(|o| !tried.contains(o)).collect();
        if options.is_empty() {
            tried.clear();
            tried.insert(current);
            options = self.active.iter().copied().filter(|o| *o != current).collect();
        }
        let Some(next) = self.topology.nearest(member, &options) else {
            return;
        };
        self.metrics.push(MetricEvent::event(self.now, member, "reattach", Some(next), current.0 as f64));
        self.attach(member, next);
    }

    /// Resize the overlay to the first `m` candidates. Every honest OBM emits
    /// the same request at the same instant; only the first is applied.
    fn recluster(&mut self, m: usize, at: SimTime) {
        if self.last_recluster == Some((m, at)) {
            return;
        }
        self.last_recluster = Some((m, at));
        let m = m.clamp(1, self.candidates.len());
        let new: Vec<NodeId> = self.candidates[..m].to_vec();
        if new == self.active {
            return;
        }
        let old = std::mem::replace(&mut self.active, new.clone());
        let donor = old.iter().copied().find(|o| new.contains(o)).unwrap_or(old[0]);
        let (replica, pool, cp_history) = {
            let d = self.obm(donor).expect("donor is an OBM");
            (d.replica.clone(), d.pool.clone(), d.cp_history.clone())
        };
        for id in self.candidates.clone() {
            let promoted = new.contains(&id) && !old.contains(&id);
            let now = self.now;
            let o = self.obm_mut(id).expect("candidates are OBMs");
            o.set_active(new.clone());
            if promoted {
                o.replica = replica.clone();
                o.pool = pool.clone();
                o.cp_history = cp_history.clone();
                let out = o.start(now);
                self.dispatch(id, out);
            }
        }
        self.metrics.push(MetricEvent::event(self.now, donor, "recluster", None, m as f64));
        for i in 0..self.nodes.len() {
            let id = NodeId(i as u32);
            let Some(cur) = self.nodes[i].attached() else { continue };
            if self.pinned.contains(&id) && new.contains(&cur) {
                continue;
            }
            if let Some(obm) = self.topology.nearest(id, &new) {
                if obm != cur || !old.contains(&cur) {
                    self.attach(id, obm);
                }
            }
        }
    }
}

/// Worst-case end-to-end delay between OBMs: the overlay diameter plus
/// serializing a full block to every other OBM from one NIC.
pub fn max_e2e_estimate(topology: &Topology, obms: &[NodeId], bandwidth_bps: f64, max_block_bytes: usize) -> SimDuration {
    let per_copy = max_block_bytes as f64 * 8.0 / bandwidth_bps;
    let fanout = obms.len().saturating_sub(1) as f64;
    topology.diameter(obms) + SimDuration::from_secs_f64(per_copy * fanout)
}
