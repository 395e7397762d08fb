//! Named experiments. Each one returns CSV files keyed by file name.

pub mod attacks;
pub mod network;

use thiserror::Error;

use crate::error::ScenarioError;
use crate::metrics::to_csv;
use crate::oracle;

pub use attacks::{
    agreement_safety, forge_against_quiet, home_attack_rows, min_ptv, min_ptv_table, monte_carlo, success_rate,
    AppendingBench, OBM_GRID, PTV_GRID,
};
pub use network::{burst, dtm_trace, single_burst, flow_separation, linear_fit, overhead, trust_decay};

/// Names accepted by [`run_named`].
pub const EXPERIMENTS: [&str; 10] = [
    "flow_separation",
    "trust_decay",
    "attack_vs_obms",
    "min_ptv",
    "dtm_trace",
    "overhead",
    "monte_carlo",
    "agreement",
    "burst",
    "mutation",
];

/// Fixed PTV used when sweeping the OBM count: the floor of the default trust table.
pub const DEFAULT_FLOOR_PTV: u32 = 20;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown experiment {0:?}")]
    Unknown(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

pub type CsvFiles = Vec<(String, String)>;

/// Run experiment `name` with one seed.
pub fn run_named(name: &str, seed: u64) -> Result<CsvFiles, ExperimentError> {
    let files = match name {
        "flow_separation" => vec![("flow_separation.csv".into(), to_csv(&network::flow_separation(seed)?))],
        "trust_decay" => vec![("trust_decay.csv".into(), to_csv(&network::trust_decay(seed)?))],
        "attack_vs_obms" => {
            #[derive(serde::Serialize)]
            struct Row {
                m: usize,
                ptv: u32,
                success_pct: f64,
                packet_bytes: u64,
            }
            let mut rows = Vec::new();
            let mut trials = Vec::new();
            for m in OBM_GRID {
                let (s, t) = attacks::success_rate(m, DEFAULT_FLOOR_PTV, 10, seed);
                rows.push(Row { m, ptv: s.ptv, success_pct: s.success_pct, packet_bytes: network::management_bytes(m, seed)? });
                trials.extend(t);
            }
            vec![("attack_vs_obms.csv".into(), to_csv(&rows)), ("attack_runs.csv".into(), to_csv(&trials))]
        }
        "min_ptv" => {
            let (table, trials) = attacks::min_ptv_table(10, seed);
            let mut sweep = Vec::new();
            for p in PTV_GRID {
                sweep.push(attacks::success_rate(5, p, 10, seed).0);
            }
            vec![
                ("min_ptv.csv".into(), to_csv(&table)),
                ("min_ptv_runs.csv".into(), to_csv(&trials)),
                ("ptv_sweep_m5.csv".into(), to_csv(&sweep)),
            ]
        }
        "dtm_trace" => {
            let t = network::dtm_trace(seed)?;
            vec![
                ("dtm_trace.csv".into(), to_csv(&t.points)),
                ("dtm_samples.csv".into(), to_csv(&t.samples)),
                ("dtm_applied.csv".into(), to_csv(&t.applied)),
            ]
        }
        "overhead" => vec![("overhead.csv".into(), to_csv(&[network::overhead(seed)?]))],
        "monte_carlo" => vec![("monte_carlo.csv".into(), to_csv(&attacks::monte_carlo(10, 10_000, seed)))],
        "agreement" => {
            let mut rows = attacks::agreement_safety(100, seed);
            rows.push(attacks::forge_against_quiet(13, 6, seed));
            rows.push(attacks::forge_against_quiet(13, 7, seed));
            vec![("agreement.csv".into(), to_csv(&rows))]
        }
        "burst" => {
            vec![
                ("burst.csv".into(), to_csv(&network::burst(seed, true)?)),
                ("burst_single.csv".into(), to_csv(&network::single_burst(seed)?)),
                ("burst_honest.csv".into(), to_csv(&network::burst(seed, false)?)),
            ]
        }
        "mutation" => {
            let r = oracle::mutate_chain(10, seed);
            #[derive(serde::Serialize)]
            struct Row {
                chain_len: usize,
                mutants: usize,
                survivors: usize,
                clean_chain_ok: bool,
            }
            vec![(
                "mutation.csv".into(),
                to_csv(&[Row { chain_len: r.chain_len, mutants: r.mutants, survivors: r.survivors, clean_chain_ok: r.clean_chain_ok }]),
            )]
        }
        other => return Err(ExperimentError::Unknown(other.into())),
    };
    Ok(files)
}
