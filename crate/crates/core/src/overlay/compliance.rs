//! Policing of peer block rates.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::ids::ObmId;
use crate::time::{SimDuration, SimTime};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplianceConfig {
    /// A block is "early" when its estimated wait is below this fraction of max_waiting.
    pub early_fraction: f64,
    /// Number of recent blocks per generator inspected by the early-block rule.
    pub early_window: usize,
    /// Violation when more than this many of the inspected blocks were early.
    pub early_threshold: usize,
    /// Allowance for delivery jitter between two blocks of one generator.
    pub slack: SimDuration,
}

impl Default for ComplianceConfig {
    fn default() -> Self {
        ComplianceConfig { early_fraction: 0.01, early_window: 10, early_threshold: 3, slack: SimDuration::ZERO }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Compliant,
    TooSoon,
    TooManyEarly,
}

/// Consensus-period values with the instant each took effect.
#[derive(Clone, Debug)]
pub struct CpHistory {
    changes: Vec<(SimTime, SimDuration)>,
}

impl CpHistory {
    pub fn new(initial: SimDuration) -> Self {
        CpHistory { changes: vec![(SimTime::ZERO, initial)] }
    }

    pub fn set(&mut self, at: SimTime, cp: SimDuration) {
        self.changes.push((at, cp));
        self.changes.sort_by_key(|(t, _)| *t);
    }

    pub fn at(&self, t: SimTime) -> SimDuration {
        self.changes.iter().rev().find(|(s, _)| *s <= t).map(|(_, c)| *c).unwrap_or(self.changes[0].1)
    }

    /// Smallest value in force anywhere in `[from, to]`.
    pub fn min_over(&self, from: SimTime, to: SimTime) -> SimDuration {
        let mut m = self.at(from);
        for (t, c) in &self.changes {
            if *t > from && *t <= to {
                m = m.min(*c);
            }
        }
        m
    }
}

#[derive(Clone, Debug, Default)]
pub struct ComplianceMonitor {
    last_compliant: BTreeMap<ObmId, SimTime>,
    early: BTreeMap<ObmId, VecDeque<bool>>,
}

impl ComplianceMonitor {
    pub fn last_compliant(&self, generator: ObmId) -> Option<SimTime> {
        self.last_compliant.get(&generator).copied()
    }

    /// Judge a block from `generator` received at `receipt`.
    ///
    /// `est_wait` is the observer's estimate of how long the generator waited
    /// before producing the block, when one is available.
    pub fn police(
        &mut self,
        cfg: &ComplianceConfig,
        generator: ObmId,
        receipt: SimTime,
        cp: SimDuration,
        est_wait: Option<SimDuration>,
        max_waiting: SimDuration,
    ) -> Verdict {
        if let Some(last) = self.last_compliant.get(&generator) {
            let needed = SimDuration(cp.0.saturating_sub(cfg.slack.0));
            if receipt.since(*last) < needed {
                return Verdict::TooSoon;
            }
        }
        let is_early = match est_wait {
            Some(w) => (w.0 as f64) < cfg.early_fraction * max_waiting.0 as f64,
            None => false,
        };
        let window = self.early.entry(generator).or_default();
        window.push_back(is_early);
        while window.len() > cfg.early_window {
            window.pop_front();
        }
        if window.iter().filter(|e| **e).count() > cfg.early_threshold {
            return Verdict::TooManyEarly;
        }
        self.last_compliant.insert(generator, receipt);
        Verdict::Compliant
    }
}
