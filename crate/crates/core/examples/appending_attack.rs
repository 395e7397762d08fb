//! A trusted OBM slips one fake into every block; how often do honest
//! sampling verifiers miss it?

use lsb::experiments::attacks::{min_ptv, success_rate, PTV_GRID};
use lsb::oracle::detect_prob;

fn main() {
    let m = 5;
    println!("ptv  success%  exact miss%");
    for ptv in PTV_GRID {
        let (row, _) = success_rate(m, ptv, 500, 1);
        let exact = 100.0 * (1.0 - detect_prob(10, 1, ptv, m - 1));
        println!("{ptv:>3}  {:>8.1}  {exact:>11.1}", row.success_pct);
    }
    let (row, _) = min_ptv(m, 10, 1);
    println!("least PTV catching 10 of 10 attack blocks at {m} OBMs: {}", row.min_ptv);
}
