//! How many transactions a verifier checks as evidence about a block generator grows.

use lsb::ids::NodeId;
use lsb::overlay::{sample_size, TrustConfig, TrustTable};

fn main() {
    let m = 13;
    let mut t = TrustTable::new(TrustConfig::for_obm_count(m));
    let g = NodeId(3);
    println!("floor PTV at {m} OBMs: {}", t.config.floor);
    println!("no evidence: PTV {}", t.select_ptv(g));
    for v in [1, 2, 4, 5, 6, 7] {
        t.record_vouch(NodeId(v), g);
    }
    println!("vouched by 6 peers: PTV {}", t.select_ptv(g));
    let mut seen = 0;
    for target in [1, 10, 25, 50, 80] {
        while seen < target {
            t.record_valid_block(g);
            seen += 1;
        }
        let ptv = t.select_ptv(g);
        println!("{seen:>3} valid blocks: PTV {ptv:>3}, checks {} of 10", sample_size(ptv, 10));
    }
}
