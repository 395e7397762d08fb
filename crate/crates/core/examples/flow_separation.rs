//! Data delay and bytes as the OBM count grows, unicast data versus a flooded baseline.

use lsb::experiments::network::{flow_separation, linear_fit};

fn main() -> anyhow::Result<()> {
    let rows = flow_separation(1)?;
    println!(" M  delay ms (lsb / flood)   KB (lsb / flood)");
    for r in &rows {
        println!(
            "{:>2}  {:>8.2} / {:>8.2}   {:>8.0} / {:>8.0}",
            r.m,
            r.delay_lsb,
            r.delay_broadcast,
            r.bytes_lsb as f64 / 1e3,
            r.bytes_broadcast as f64 / 1e3
        );
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.m as f64).collect();
    let (slope, _, r2) = linear_fit(&xs, &rows.iter().map(|r| r.delay_broadcast).collect::<Vec<_>>());
    println!("flood delay grows {slope:.2} ms per OBM (R2 {r2:.3})");
    Ok(())
}
