//! Load a scenario file (default: the bundled default scenario), run it and
//! print the summary. Usage: cargo run --example scenario_run [path.toml]

use std::path::PathBuf;

use lsb::scenario::{run, Scenario};

fn main() -> anyhow::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/default.toml"));
    let s = Scenario::load(&path)?;
    let out = run(&s)?;
    let m = &out.summary;
    println!("{} (seed {}), {} OBMs, max e2e {:.2} ms", m.name, m.seed, m.active_obms, m.max_e2e_ms);
    println!("chain height {}..{}, {} transactions", m.chain_height_min, m.chain_height_max, m.chain_txs);
    println!("requests completed {}, packets {} sent / {} delivered", m.requests_completed, m.packets_sent, m.packets_delivered);
    for (name, body) in out.csv_files() {
        println!("  {name}: {} rows", body.lines().count().saturating_sub(1));
    }
    Ok(())
}
