use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use guided_bo::harness::{self, CampaignConfig};
use guided_bo::simulator::{landscape_slice, write_slice_csv};
use guided_bo::{Error, Metric, OptimizerKind};

#[derive(Parser)]
#[command(name = "guided-bo", version, about = "Domain-guided Bayesian optimization campaigns")]
struct Cli {
    /// Override campaign.master_seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured algorithm over all trials.
    Run { config: PathBuf },
    /// Run the ablation set: domain_guided, transform_only, annealing_only.
    Ablate { config: PathBuf },
    /// Export a noiseless 2-D slice through the optimum.
    Landscape {
        config: PathBuf,
        /// Two axis indices, e.g. `4,5`.
        #[arg(long, value_parser = parse_axes)]
        axes: (usize, usize),
        #[arg(long, default_value_t = 101)]
        grid: usize,
        /// Output file; defaults to `<output_dir>/landscape_<a>_<b>.csv`, `-` for stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a configuration without running anything.
    Validate { config: PathBuf },
}

fn parse_axes(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected two comma-separated axes, e.g. 0,1")?;
    let a = a.trim().parse().map_err(|e| format!("axis `{a}`: {e}"))?;
    let b = b.trim().parse().map_err(|e| format!("axis `{b}`: {e}"))?;
    if a == b {
        return Err("axes must differ".into());
    }
    Ok((a, b))
}

fn load(path: &PathBuf, seed: Option<u64>) -> guided_bo::Result<CampaignConfig> {
    let mut cfg = CampaignConfig::load(path)?;
    if let Some(s) = seed {
        cfg.campaign.master_seed = s;
    }
    Ok(cfg)
}

fn summarize(result: &harness::CampaignResult) -> guided_bo::Result<()> {
    for (kind, traces) in &result.traces {
        let failed = traces.iter().filter(|t| !t.is_ok()).count();
        match (
            result.aggregate(*kind, Metric::RunMinError),
            result.aggregate(*kind, Metric::RunMaxIntensity),
        ) {
            (Ok(e), Ok(i)) => println!(
                "{:<15} median final min E {:>9.4} um  max I {:>9.4}  failed {}/{}",
                kind.name(),
                e.final_median().unwrap_or(f64::NAN),
                i.final_median().unwrap_or(f64::NAN),
                failed,
                traces.len()
            ),
            _ => println!("{:<15} all {} trials failed", kind.name(), traces.len()),
        }
    }
    Ok(())
}

fn execute(cli: Cli) -> guided_bo::Result<()> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = load(&config, cli.seed)?;
            println!(
                "{}: ok ({} algorithms, {} trials x {} evaluations)",
                config.display(),
                cfg.algorithms.len(),
                cfg.campaign.n_trials,
                cfg.campaign.budget
            );
        }
        Command::Run { config } => {
            let cfg = load(&config, cli.seed)?;
            let (result, dir) = harness::run_campaign(&cfg, cli.jobs)?;
            summarize(&result)?;
            println!("outputs in {}", dir.display());
        }
        Command::Ablate { config } => {
            let cfg = load(&config, cli.seed)?.restricted_to(&OptimizerKind::ABLATION);
            cfg.validate()?;
            let (result, dir) = harness::run_campaign(&cfg, cli.jobs)?;
            summarize(&result)?;
            println!("outputs in {}", dir.display());
        }
        Command::Landscape { config, axes, grid, out } => {
            let cfg = load(&config, cli.seed)?;
            let sim = &cfg.simulator;
            let rows = landscape_slice(sim, axes.0, axes.1, grid, &sim.theta_star)
                .map_err(|e| Error::Config(format!("landscape: {e}")))?;
            match out {
                Some(p) if p.as_os_str() == "-" => write_slice_csv(&rows, io::stdout().lock())?,
                other => {
                    let path = other.unwrap_or_else(|| {
                        cfg.output_dir().join(format!("landscape_{}_{}.csv", axes.0, axes.1))
                    });
                    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                        fs::create_dir_all(parent)?;
                    }
                    let mut w = BufWriter::new(fs::File::create(&path)?);
                    write_slice_csv(&rows, &mut w)?;
                    w.flush()?;
                    println!("{} rows written to {}", rows.len(), path.display());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_)
                | Error::InvalidBounds(_)
                | Error::InvalidPairing(_)
                | Error::IndexOutOfRange { .. }
                | Error::DimensionError { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
