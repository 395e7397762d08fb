//! The throughput controller reacting to a load schedule of 10, 32, 44 and
//! then 12 transactions per second.

use lsb::experiments::network::dtm_trace;

fn main() -> anyhow::Result<()> {
    let t = dtm_trace(1)?;
    println!("   t   alpha  period  action");
    for p in &t.points {
        println!("{:>5.1}  {:>5.2}  {:>6.1}  {}", p.t, p.alpha, p.consensus_period, p.action);
    }
    Ok(())
}
