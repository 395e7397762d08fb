//! Metric events emitted by handlers and the per-family CSV tables built from them.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::ids::NodeId;
use crate::netsim::message::MessageKind;
use crate::time::{SimDuration, SimTime};

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct VerificationRow {
    pub t: f64,
    pub observer: u32,
    pub generator: u32,
    pub direct_before: i64,
    pub ptv: u32,
    pub n_txs: usize,
    /// Transaction checks spent on this block.
    pub executed: usize,
    pub outcome: String,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct BlockRow {
    pub t: f64,
    pub observer: u32,
    pub generator: u32,
    pub event: String,
    pub detail: String,
    pub n_txs: usize,
    pub bytes: usize,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct TrustRow {
    pub t: f64,
    pub observer: u32,
    pub peer: u32,
    pub delta: i64,
    pub direct_after: i64,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct DelayRow {
    pub t: f64,
    pub from: u32,
    pub to: u32,
    pub delay_ms: f64,
    pub bytes: usize,
    pub accepted: bool,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct DtmTraceRow {
    pub t: f64,
    pub node: u32,
    pub window: u64,
    pub generated: u64,
    pub appended: u64,
    pub rate: f64,
    pub alpha: f64,
    pub measured_alpha: f64,
    pub consensus_period: f64,
    pub decision: String,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct DtmAppliedRow {
    pub t: f64,
    pub node: u32,
    pub window: u64,
    pub action: String,
    pub signatures: usize,
    pub via_fallback: bool,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct EventRow {
    pub t: f64,
    pub node: u32,
    pub event: String,
    pub peer: i64,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct AttackRow {
    pub scenario: String,
    pub m: usize,
    pub ptv: u32,
    pub run: u32,
    pub detected: bool,
    pub detecting_obms: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MetricEvent {
    Verification(VerificationRow),
    Block(BlockRow),
    Trust(TrustRow),
    Delay(DelayRow),
    Dtm(DtmTraceRow),
    DtmApplied(DtmAppliedRow),
    Event(EventRow),
}

pub fn secs(t: SimTime) -> f64 {
    t.as_secs_f64()
}

impl MetricEvent {
    pub fn event(t: SimTime, node: NodeId, event: &str, peer: Option<NodeId>, value: f64) -> Self {
        MetricEvent::Event(EventRow {
            t: secs(t),
            node: node.0,
            event: event.to_string(),
            peer: peer.map(|p| p.0 as i64).unwrap_or(-1),
            value,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PacketCount {
    pub packets: u64,
    pub bytes: u64,
}

/// Per-hop transmission totals by phase, message kind and transmitting node.
#[derive(Clone, Debug, Default)]
pub struct PacketLedger {
    pub counts: BTreeMap<(String, MessageKind, NodeId), PacketCount>,
    /// End-to-end messages handed to the network and delivered to a handler.
    pub sent: u64,
    pub delivered: u64,
    pub lost: u64,
}

#[derive(Serialize)]
struct PacketRow<'a> {
    phase: &'a str,
    kind: &'a str,
    node: u32,
    packets: u64,
    bytes: u64,
}

impl PacketLedger {
    pub fn record_hop(&mut self, phase: &str, kind: MessageKind, node: NodeId, bytes: usize) {
        let c = self.counts.entry((phase.to_string(), kind, node)).or_default();
        c.packets += 1;
        c.bytes += bytes as u64;
    }

    pub fn total(&self, filter: impl Fn(MessageKind) -> bool) -> PacketCount {
        let mut t = PacketCount::default();
        for ((_, k, _), c) in &self.counts {
            if filter(*k) {
                t.packets += c.packets;
                t.bytes += c.bytes;
            }
        }
        t
    }

    pub fn by_kind(&self, kind: MessageKind) -> PacketCount {
        self.total(|k| k == kind)
    }
}

/// All measurements from one run.
#[derive(Clone, Debug, Default)]
pub struct MetricsBundle {
    pub verification: Vec<VerificationRow>,
    pub blocks: Vec<BlockRow>,
    pub trust: Vec<TrustRow>,
    pub delays: Vec<DelayRow>,
    pub dtm_trace: Vec<DtmTraceRow>,
    pub dtm_applied: Vec<DtmAppliedRow>,
    pub events: Vec<EventRow>,
    pub attacks: Vec<AttackRow>,
    pub packets: PacketLedger,
}

pub const CSV_SCHEMA_VERSION: u32 = 1;

impl MetricsBundle {
    pub fn push(&mut self, ev: MetricEvent) {
        match ev {
            MetricEvent::Verification(r) => self.verification.push(r),
            MetricEvent::Block(r) => self.blocks.push(r),
            MetricEvent::Trust(r) => self.trust.push(r),
            MetricEvent::Delay(r) => self.delays.push(r),
            MetricEvent::Dtm(r) => self.dtm_trace.push(r),
            MetricEvent::DtmApplied(r) => self.dtm_applied.push(r),
            MetricEvent::Event(r) => self.events.push(r),
        }
    }

    pub fn count_events(&self, name: &str) -> usize {
        self.events.iter().filter(|e| e.event == name).count()
    }

    /// Every family as (file name, CSV text).
    pub fn to_csv_files(&self) -> Vec<(String, String)> {
        let mut packet_rows = Vec::new();
        for ((phase, kind, node), c) in &self.packets.counts {
            packet_rows.push(PacketRow { phase, kind: kind.name(), node: node.0, packets: c.packets, bytes: c.bytes });
        }
        vec![
            ("verification.csv".into(), to_csv(&self.verification)),
            ("blocks.csv".into(), to_csv(&self.blocks)),
            ("trust.csv".into(), to_csv(&self.trust)),
            ("delays.csv".into(), to_csv(&self.delays)),
            ("dtm_trace.csv".into(), to_csv(&self.dtm_trace)),
            ("dtm_applied.csv".into(), to_csv(&self.dtm_applied)),
            ("events.csv".into(), to_csv(&self.events)),
            ("attacks.csv".into(), to_csv(&self.attacks)),
            ("packets.csv".into(), to_csv(&packet_rows)),
        ]
    }

    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        write_files(dir, &self.to_csv_files())
    }
}

pub fn write_files(dir: &Path, files: &[(String, String)]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, body) in files {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}

/// Serialize rows with a header line. Empty tables still get their header
/// when the row type has one.
pub fn to_csv<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("rows serialize to csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

pub fn ms(d: SimDuration) -> f64 {
    d.as_millis_f64()
}
