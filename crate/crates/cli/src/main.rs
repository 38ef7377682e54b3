use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use exitlab_cli::config::{load, LoadedConfig};
use exitlab_cli::plot::{emit_plot_data, PlotKind};
use exitlab_cli::run::{run_plan, RunManifest, Step};
use exitlab_core::pipeline::ConstantLedger;

/// Exit-measure laboratory for jump processes with a scaling profile.
#[derive(Parser)]
#[command(name = "exitlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file, or the name of a built-in preset.
    #[arg(long, short, default_value = "stable-1d")]
    config: String,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the number of paths per estimate.
    #[arg(long)]
    paths: Option<usize>,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
    /// Only errors on stderr, nothing on stdout.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Derive the constant ledger and print it.
    Derive(Common),
    /// Check (L1)-(L3), K0 and the large-jump bound on a grid.
    CheckL(Common),
    /// Simulate exits from x0 and estimate the mean exit time.
    Simulate(Common),
    /// Estimate the exit measure and check the composition identity.
    ExitMeasure(Common),
    /// Run the J0, J1, J2 and HI checks.
    Conditions(Common),
    /// Measure Hölder increments of an exit-measure payoff.
    Holder(Common),
    /// Trace the oscillation levels against the ledger bound.
    Oscillation(Common),
    /// Turn a JSON artifact into plot-ready column files.
    PlotData {
        /// JSON artifact or run directory.
        input: PathBuf,
        /// oscillation, holder or j2.
        #[arg(long)]
        kind: String,
        #[arg(long, short, default_value = "plots")]
        out: PathBuf,
    },
    /// Run the plan of the config, or replay a manifest.
    Run {
        #[command(flatten)]
        common: Common,
        /// Manifest of an earlier run to replay; --config is then ignored.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

/// Applies the command-line overrides.
fn prepare(common: &Common, mut loaded: LoadedConfig) -> Result<LoadedConfig> {
    if let Some(seed) = common.seed {
        loaded.config.simulation.seed = seed;
    }
    if let Some(paths) = common.paths {
        loaded.config.simulation.paths = paths;
    }
    loaded.config.validate()?;
    Ok(loaded)
}

fn execute(common: &Common, loaded: LoadedConfig, plan: &[Step]) -> Result<bool> {
    let loaded = prepare(common, loaded)?;
    let manifest = run_plan(&loaded, plan, &common.out)?;
    if !common.quiet {
        if plan.contains(&Step::Derive) {
            let ledger = ConstantLedger::derive(loaded.config.ledger_inputs()?)?;
            println!("{}", ledger.table());
        }
        for s in &manifest.steps {
            println!("{:<12} {:<13} {}", s.step.name(), s.verdict.to_string(), s.summary);
        }
        println!("outputs in {}", common.out.display());
    }
    Ok(manifest.ok())
}

fn single(common: &Common, step: Step) -> Result<bool> {
    let plan: Vec<Step> = match step {
        Step::Derive | Step::CheckL => vec![step],
        _ => vec![Step::Derive, step],
    };
    execute(common, load(&common.config)?, &plan)
}

fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Derive(c) => single(&c, Step::Derive),
        Command::CheckL(c) => single(&c, Step::CheckL),
        Command::Simulate(c) => single(&c, Step::Simulate),
        Command::ExitMeasure(c) => single(&c, Step::Exit),
        Command::Conditions(c) => single(&c, Step::Conditions),
        Command::Holder(c) => single(&c, Step::Holder),
        Command::Oscillation(c) => single(&c, Step::Oscillation),
        Command::PlotData { input, kind, out } => {
            let kind: PlotKind = kind.parse()?;
            for f in emit_plot_data(&input, kind, &out)? {
                println!("{}", f.display());
            }
            Ok(true)
        }
        Command::Run { common, manifest } => {
            let (loaded, plan) = match manifest {
                Some(path) => RunManifest::read(&path)?.replay()?,
                None => {
                    let loaded = load(&common.config)?;
                    let plan = loaded
                        .config
                        .plan
                        .steps
                        .iter()
                        .map(|s| Step::parse(s))
                        .collect::<Result<Vec<_>>>()?;
                    (loaded, plan)
                }
            };
            execute(&common, loaded, &plan)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let quiet = match &cli.command {
        Command::PlotData { .. } => false,
        Command::Run { common, .. } => common.quiet,
        Command::Derive(c)
        | Command::CheckL(c)
        | Command::Simulate(c)
        | Command::ExitMeasure(c)
        | Command::Conditions(c)
        | Command::Holder(c)
        | Command::Oscillation(c) => c.quiet,
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if quiet { "error" } else { "warn" }))
        .init();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
