use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use lsb::error::ScenarioError;
use lsb::experiments::{run_named, ExperimentError, EXPERIMENTS};
use lsb::metrics::write_files;
use lsb::oracle;
use lsb::scenario::{self, Scenario};

#[derive(Parser)]
#[command(name = "lsb-sim", version, about = "Lightweight IoT blockchain simulator")]
struct Cli {
    /// Directory that results are written under.
    #[arg(long, global = true, env = "LSB_OUT", default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file, or `default` for the built-in scenario.
    Run {
        scenario: String,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a named experiment over one or more seeds.
    Exp {
        /// One of the experiment names, or `list`.
        name: String,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// First seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Brute-force reference values.
    Oracle {
        #[command(subcommand)]
        sub: OracleCmd,
    },
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Chance that honest verifiers catch fake transactions in a block.
    DetectProb {
        #[arg(long, default_value_t = 10)]
        tmax: usize,
        #[arg(long, default_value_t = 1)]
        fakes: usize,
        #[arg(long)]
        ptv: u32,
        #[arg(long, default_value_t = 1)]
        verifiers: usize,
    },
    /// Consensus period for a target utilization.
    Eq1 {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 10)]
        tmax: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        rate: f64,
    },
    /// Single-field mutations of an honest requester chain.
    MutateChain {
        #[arg(long, default_value_t = 10)]
        len: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn load_scenario(arg: &str) -> Result<Scenario, ScenarioError> {
    if arg == "default" {
        let s = Scenario::default();
        s.validate()?;
        return Ok(s);
    }
    Scenario::load(Path::new(arg))
}

fn run_scenario(out: &Path, arg: &str, seed: Option<u64>) -> Result<ExitCode> {
    let mut s = match load_scenario(arg) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(2));
        }
    };
    if let Some(seed) = seed {
        s.seed = seed;
    }
    let res = scenario::run(&s)?;
    let dir = out.join(&s.name);
    write_files(&dir, &res.csv_files()).with_context(|| format!("writing {}", dir.display()))?;
    let m = &res.summary;
    println!(
        "{}: seed {} height {}..{} txs {} requests {} packets {} -> {}",
        m.name,
        m.seed,
        m.chain_height_min,
        m.chain_height_max,
        m.chain_txs,
        m.requests_completed,
        m.packets_sent,
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn run_exp(out: &Path, name: &str, first: u64, seeds: u64) -> Result<ExitCode> {
    if name == "list" {
        for e in EXPERIMENTS {
            println!("{e}");
        }
        return Ok(ExitCode::SUCCESS);
    }
    for seed in first..first + seeds {
        let files = match run_named(name, seed) {
            Ok(f) => f,
            Err(ExperimentError::Unknown(n)) => {
                eprintln!("error: unknown experiment {n:?}; try `lsb-sim exp list`");
                return Ok(ExitCode::from(2));
            }
            Err(e) => return Err(e.into()),
        };
        let dir = out.join(name).join(format!("seed_{seed}"));
        write_files(&dir, &files).with_context(|| format!("writing {}", dir.display()))?;
        println!("{name} seed {seed}: {} files -> {}", files.len(), dir.display());
    }
    Ok(ExitCode::SUCCESS)
}

/// Twelve decimals with trailing zeros removed, so exact ratios print cleanly.
fn trim(x: f64) -> String {
    let s = format!("{x:.12}");
    let s = s.trim_end_matches('0');
    s.strip_suffix('.').unwrap_or(s).to_string()
}

fn run_oracle(sub: OracleCmd) -> ExitCode {
    match sub {
        OracleCmd::DetectProb { tmax, fakes, ptv, verifiers } => {
            println!("{}", trim(oracle::detect_prob(tmax, fakes, ptv, verifiers)));
        }
        OracleCmd::Eq1 { alpha, tmax, m, rate } => {
            println!("{:.3}", oracle::eq1_consensus_period(alpha, tmax, m, rate));
        }
        OracleCmd::MutateChain { len, seed } => {
            let r = oracle::mutate_chain(len, seed);
            println!("chain_len {} mutants {} survivors {} clean_chain_ok {}", r.chain_len, r.mutants, r.survivors, r.clean_chain_ok);
            for (pos, field) in &r.surviving {
                println!("  survivor at {pos}: {field}");
            }
            if r.survivors > 0 || !r.clean_chain_ok {
                return ExitCode::FAILURE;
            }
        }
    }
    ExitCode::SUCCESS
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run { scenario, seed } => run_scenario(&cli.out, &scenario, seed),
        Cmd::Exp { name, seeds, seed } => run_exp(&cli.out, &name, seed, seeds),
        Cmd::Oracle { sub } => Ok(run_oracle(sub)),
    }
}
