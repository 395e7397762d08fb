//! Direct and indirect evidence about peer OBMs and the evidence to PTV mapping.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ids::ObmId;

/// Minimum PTV guideline for detecting appending attacks, by OBM count.
pub const MIN_PTV_GUIDELINE: [(usize, u32); 8] =
    [(3, 80), (5, 60), (7, 60), (10, 40), (13, 20), (15, 20), (17, 20), (20, 10)];

/// Floor for `m` OBMs: the guideline of the largest listed count not above `m`.
pub fn guideline_floor(m: usize) -> u32 {
    MIN_PTV_GUIDELINE.iter().rev().find(|(k, _)| *k <= m).map(|(_, p)| *p).unwrap_or(100)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustConfig {
    /// (evidence threshold, ptv). `None` marks the floor.
    pub direct_tiers: Vec<(i64, Option<u32>)>,
    pub indirect_tiers: Vec<(i64, Option<u32>)>,
    pub floor: u32,
}

impl TrustConfig {
    pub fn for_obm_count(m: usize) -> Self {
        TrustConfig {
            direct_tiers: vec![(1, Some(80)), (10, Some(50)), (25, Some(30)), (50, None)],
            indirect_tiers: vec![(1, Some(90)), (3, Some(70)), (7, Some(50))],
            floor: guideline_floor(m),
        }
    }

    fn lookup(&self, tiers: &[(i64, Option<u32>)], evidence: i64) -> u32 {
        let mut ptv = 100;
        for (threshold, p) in tiers {
            if evidence >= *threshold {
                ptv = p.unwrap_or(self.floor);
            }
        }
        ptv.max(self.floor).max(1)
    }
}

#[derive(Clone, Debug)]
pub struct TrustTable {
    pub config: TrustConfig,
    direct: BTreeMap<ObmId, i64>,
    vouchers: BTreeMap<ObmId, BTreeSet<ObmId>>,
    distrusted: BTreeSet<ObmId>,
}

impl TrustTable {
    pub fn new(config: TrustConfig) -> Self {
        TrustTable { config, direct: BTreeMap::new(), vouchers: BTreeMap::new(), distrusted: BTreeSet::new() }
    }

    pub fn direct(&self, peer: ObmId) -> Option<i64> {
        self.direct.get(&peer).copied()
    }

    pub fn set_direct(&mut self, peer: ObmId, count: i64) {
        self.direct.insert(peer, count);
    }

    pub fn record_valid_block(&mut self, peer: ObmId) {
        *self.direct.entry(peer).or_insert(0) += 1;
    }

    pub fn penalize(&mut self, peer: ObmId) {
        *self.direct.entry(peer).or_insert(0) -= 1;
    }

    pub fn record_vouch(&mut self, voucher: ObmId, subject: ObmId) {
        self.vouchers.entry(subject).or_default().insert(voucher);
    }

    /// Stop counting vouches from `voucher`.
    pub fn distrust(&mut self, voucher: ObmId) {
        self.distrusted.insert(voucher);
    }

    pub fn is_distrusted(&self, voucher: ObmId) -> bool {
        self.distrusted.contains(&voucher)
    }

    pub fn indirect(&self, peer: ObmId) -> i64 {
        self.vouchers
            .get(&peer)
            .map(|s| s.iter().filter(|v| !self.distrusted.contains(v)).count() as i64)
            .unwrap_or(0)
    }

    pub fn select_ptv(&self, generator: ObmId) -> u32 {
        select_ptv(self, generator)
    }
}

/// Direct evidence wins over indirect; no evidence means verify everything.
pub fn select_ptv(trust: &TrustTable, generator: ObmId) -> u32 {
    let cfg = &trust.config;
    if let Some(d) = trust.direct(generator) {
        if d <= 0 {
            return 100;
        }
        return cfg.lookup(&cfg.direct_tiers, d);
    }
    let ind = trust.indirect(generator);
    if ind > 0 {
        return cfg.lookup(&cfg.indirect_tiers, ind);
    }
    100
}
