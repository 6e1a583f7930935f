use std::ops::Range;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swglass::campaign::{Campaign, ExperimentConfig};
use swglass::Error;

/// Small-world spin-glass experiments driven by a TOML config.
#[derive(Parser)]
#[command(name = "swglass", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the graph of every size, with small-world couplers.
    Generate(Common),
    /// Simulate a range of disorder instances.
    Run {
        #[command(flatten)]
        common: Common,
        /// Instance index range `A..B` (end exclusive); all by default.
        #[arg(long, value_parser = parse_range)]
        instances: Option<Range<usize>>,
        /// Worker threads; defaults to the config value.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Aggregate series into tables, crossings and collapses.
    Analyze(Common),
    /// Compare against exact enumeration on sizes small enough for it.
    OracleCheck(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<Range<usize>, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected A..B, got {s:?}"))?;
    let a: usize = a.trim().parse().map_err(|_| format!("bad range start {a:?}"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad range end {b:?}"))?;
    if a >= b {
        return Err(format!("empty range {a}..{b}"));
    }
    Ok(a..b)
}

const CONFIG_ERROR: u8 = 2;
const DATA_ERROR: u8 = 3;
const THERMALIZATION_WARNING: u8 = 4;

fn code_of(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) => CONFIG_ERROR,
        _ => DATA_ERROR,
    }
}

fn open(common: &Common) -> Result<Campaign, u8> {
    let config = ExperimentConfig::load(&common.config).map_err(|e| {
        eprintln!("error: {e}");
        CONFIG_ERROR
    })?;
    Campaign::new(config, common.out.clone()).map_err(|e| {
        eprintln!("error: {e}");
        CONFIG_ERROR
    })
}

fn fail(e: Error) -> u8 {
    eprintln!("error: {e}");
    code_of(&e)
}

fn execute(cli: Cli) -> Result<(), u8> {
    match cli.command {
        Command::Generate(common) => {
            let camp = open(&common)?;
            for s in camp.generate().map_err(fail)? {
                println!("{s}");
            }
            println!("config {}", camp.config_hash());
        }
        Command::Run {
            common,
            instances,
            workers,
        } => {
            let camp = open(&common)?;
            let range = instances.unwrap_or(0..camp.config.n_instances);
            let workers = workers.unwrap_or(camp.config.workers);
            let s = camp.run(range, workers).map_err(fail)?;
            println!(
                "completed {} unthermalized {} skipped {}",
                s.completed.len(),
                s.unthermalized.len(),
                s.skipped.len()
            );
            for (l, i) in &s.unthermalized {
                println!("unthermalized L={l} instance={i}");
            }
            if !s.unthermalized.is_empty() {
                return Err(THERMALIZATION_WARNING);
            }
        }
        Command::Analyze(common) => {
            let camp = open(&common)?;
            let a = camp.analyze().map_err(fail)?;
            let mut warn = false;
            for s in &a.sizes {
                let ens = s.ensemble_thermalization.as_ref();
                let ok = ens.is_some_and(|r| r.passed);
                warn |= !ok || s.flagged_unthermalized > 0;
                println!(
                    "L={} N={} instances={} flagged={} excluded={} ensemble_thermalized={}",
                    s.size,
                    s.n_spins,
                    s.n_instances,
                    s.flagged_unthermalized,
                    s.excluded_unthermalized,
                    ens.map_or("n/a".to_string(), |r| r.passed.to_string())
                );
            }
            for (a, b, t) in &a.crossings {
                match t {
                    Some(t) => println!("crossing L={a}/{b} T={t:.4}"),
                    None => println!("crossing L={a}/{b} none"),
                }
            }
            for r in [&a.binder_collapse, &a.chi_collapse].into_iter().flatten() {
                println!(
                    "collapse {} T_c={:.4}({:.4}) nu_eff={:.3} S={:.3}",
                    r.observable.label(),
                    r.params.tc,
                    r.tc_err,
                    r.params.nu_eff,
                    r.quality
                );
            }
            println!("output {}", camp.analysis_dir().display());
            if warn {
                return Err(THERMALIZATION_WARNING);
            }
        }
        Command::OracleCheck(common) => {
            let camp = open(&common)?;
            let r = camp.oracle_check().map_err(fail)?;
            println!(
                "checked sizes {:?}, skipped {:?}; {} comparisons, max z {:.2}, within 2 sigma {:.1}%",
                r.sizes_checked,
                r.sizes_skipped,
                r.comparisons.len(),
                r.max_z(),
                100.0 * r.fraction_within(2.0)
            );
            if !r.passed() {
                eprintln!("oracle disagreement");
                return Err(DATA_ERROR);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}
