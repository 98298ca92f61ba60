use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use apsde_cli::{load_config, run_experiment, write_tables, ExperimentKind};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "apsde",
    version,
    about = "Slow-fast SDE experiments driven by fractional Brownian motion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One trajectory of the AP, limiting and averaged schemes.
    Simulate(Common),
    /// Both iterated-limit error curves of the AP diagram.
    ApDiagram(Common),
    /// Conditional weak error over the Δt grid with a log-log slope.
    RateFit(Common),
    /// Terminal gap between the AP scheme at ε and its ε = 0 limit.
    EpsSweep(Common),
    /// Brownian driver: convergence in law but not in probability.
    BrownianCompare(Common),
    /// Sup norms of the first and second variations of the averaged flow.
    VariationDiag(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override mc.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the Monte-Carlo loops.
    #[arg(long, env = "APSDE_THREADS")]
    threads: Option<usize>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (kind, args) = match cli.command {
        Command::Simulate(a) => (ExperimentKind::Simulate, a),
        Command::ApDiagram(a) => (ExperimentKind::ApDiagram, a),
        Command::RateFit(a) => (ExperimentKind::RateFit, a),
        Command::EpsSweep(a) => (ExperimentKind::EpsSweep, a),
        Command::BrownianCompare(a) => (ExperimentKind::BrownianCompare, a),
        Command::VariationDiag(a) => (ExperimentKind::VariationDiag, a),
    };
    if let Some(k) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.output = out;
    }
    for w in cfg.g.warnings() {
        eprintln!("warning: g: {w}");
    }
    if let Some(caveat) = cfg.phi.caveat() {
        eprintln!("warning: phi = {}: {caveat}", cfg.phi.name());
    }
    let tables = run_experiment(&cfg, kind)?;
    for path in write_tables(&tables, &cfg.output)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
