//! Consensus-rule attacks: a block burst, forged period votes, and the home-tier attacks.

use lsb::adversary::AttackKind;
use lsb::experiments::attacks::{forge_against_quiet, home_attack_rows};
use lsb::experiments::network::single_burst;

fn main() -> anyhow::Result<()> {
    for r in single_burst(1)? {
        println!("OBM {:>2}: {} surplus blocks, {} dropped, trust -{}", r.observer, r.surplus_blocks, r.dropped, r.trust_decrements);
    }
    for forgers in [6, 7] {
        let row = forge_against_quiet(13, forgers, 1);
        println!("{forgers} of 13 forging a period: applied {}", row.forged_applied);
    }
    for kind in [AttackKind::FalseReputation, AttackKind::Modification, AttackKind::DeviceInjection, AttackKind::LinkingProbe] {
        let rows = home_attack_rows(kind, 1);
        let caught = rows.iter().filter(|r| r.detected).count();
        println!("{kind:?}: {caught}/{} caught", rows.len());
    }
    Ok(())
}
