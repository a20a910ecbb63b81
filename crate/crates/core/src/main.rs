use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use polmem::harness::{
    emit, load_config, load_dataset, run_calibrate, run_fig3, run_fig4, run_fig5, run_fit,
    run_simulate, run_table1, FitModel, OutputFormat, RunArtifact, ScenarioConfig,
};
use polmem::{Error, Result};

/// Simulator and reproduction harness for a multi-channel polarization-qubit
/// quantum memory.
#[derive(Debug, Parser)]
#[command(name = "polmem", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Scenario file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pulses per (input, basis) setting.
    #[arg(long, global = true)]
    pulses: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Use mean counts instead of sampled counts.
    #[arg(long, global = true)]
    expected_counts: bool,
    /// Output format; repeat for several. Defaults to csv and json.
    #[arg(long, global = true, value_enum)]
    format: Vec<OutputFormat>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Regenerate one of the reference figures or tables.
    Reproduce {
        #[arg(value_enum)]
        target: Target,
    },
    /// Run tomography for every channel at every configured storage time.
    Simulate,
    /// Fit a dataset CSV with columns t_ms,value[,sigma].
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "exponential")]
        model: FitModel,
    },
    /// Solve for per-channel static coherence factors.
    Calibrate {
        /// Target as CHANNEL=FIDELITY; repeatable. Defaults to the reference table.
        #[arg(long = "target", value_parser = parse_target)]
        targets: Vec<(String, f64)>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Target {
    Fig3,
    Fig4,
    Fig5,
    Table1,
}

fn parse_target(s: &str) -> std::result::Result<(String, f64), String> {
    let (id, f) = s
        .split_once('=')
        .ok_or_else(|| format!("expected CHANNEL=FIDELITY, got {s:?}"))?;
    let f: f64 = f
        .trim()
        .parse()
        .map_err(|e| format!("bad fidelity {f:?}: {e}"))?;
    Ok((id.trim().to_string(), f))
}

fn scenario(global: &GlobalArgs) -> Result<ScenarioConfig> {
    let mut cfg = match &global.config {
        Some(path) => load_config(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(pulses) = global.pulses {
        cfg.pulses_per_setting = pulses;
    }
    if let Some(out) = &global.out {
        cfg.output_dir = out.clone();
    }
    if global.expected_counts {
        cfg.expected_counts = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<RunArtifact> {
    let cfg = scenario(&cli.global)?;
    match &cli.command {
        Command::Reproduce { target } => match target {
            Target::Fig3 => run_fig3(&cfg),
            Target::Fig4 => run_fig4(&cfg),
            Target::Fig5 => run_fig5(&cfg),
            Target::Table1 => run_table1(&cfg),
        },
        Command::Simulate => run_simulate(&cfg),
        Command::Fit { data, model } => run_fit(&cfg, &load_dataset(data)?, *model),
        Command::Calibrate { targets } => run_calibrate(&cfg, targets),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let formats = if cli.global.format.is_empty() {
        vec![OutputFormat::Csv, OutputFormat::Json]
    } else {
        cli.global.format.clone()
    };
    let outcome = run(&cli).and_then(|artifact| {
        let files = emit(&artifact, &artifact.config.output_dir, &formats)?;
        for f in &files {
            println!("{}", f.display());
        }
        // Tables are written even when a fit failed.
        artifact.failure().map_or(Ok(()), Err)
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("polmem: {e}");
            ExitCode::from(exit_status(&e))
        }
    }
}

fn exit_status(e: &Error) -> u8 {
    e.exit_code() as u8
}
