use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use qmetro_core::channel_spec::export_channel_spec;
use qmetro_core::channels;
use qmetro_core::experiment::{
    parse_grid, run_experiment, ChannelSource, ExperimentConfig, ExperimentKind, OutputFormat,
};
use qmetro_core::saddle::SaddleMethod;

/// Exit status when output was written but some rows missed the tolerance.
const EXIT_UNCONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "qmetro", version, about = "Precision limits for parameter estimation through quantum channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extended, ancilla-free and reference QFI at single points.
    QfiPoint(RunArgs),
    /// Raw saddle solve with both certificates.
    Saddle(RunArgs),
    /// Optimal extended QFI and probe entropy over a noise sweep.
    SweepEta(RunArgs),
    /// Entropy of one qubit of the optimal N-qubit probe.
    ProbeEntropy(RunArgs),
    /// N-qubit dephasing: entropy and symmetric amplitude profile.
    NqubitDephasing(RunArgs),
    /// N spontaneous-emission qubits with and without an ancilla.
    SeWithAncilla(RunArgs),
    /// Whether an ancilla can improve the QFI.
    AncillaCheck(RunArgs),
    /// Channel pair whose optimal contraction is not unitary.
    Counterexample(RunArgs),
    /// Write a zoo channel as a JSON channel spec.
    ExportChannel(ExportArgs),
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Zoo id (dephasing, spontaneous-emission, xy-noise, unitary, counterexample) or JSON spec path
    #[arg(long)]
    channel: Option<String>,
    /// Noise strength: v, v1,v2,... or a:b:step
    #[arg(long)]
    eta: Option<String>,
    /// Number of probes sent through independent copies of the channel
    #[arg(long = "N")]
    n: Option<usize>,
    /// Interaction time of the unitary channel
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    x: Option<f64>,
    /// Finite-difference step
    #[arg(long)]
    dx: Option<f64>,
    /// Accuracy target for reported QFI values
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "csv")]
    format: String,
    /// Output file; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores)
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// interior-point or conditional-gradient
    #[arg(long)]
    method: Option<String>,
    /// Random restarts of the ancilla-free search
    #[arg(long)]
    restarts: Option<usize>,
    /// Use a single finite-difference step
    #[arg(long)]
    no_richardson: bool,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long)]
    channel: String,
    #[arg(long, default_value = "0.5")]
    eta: f64,
    #[arg(long, default_value = "1.0")]
    t: f64,
    /// Tabulated parameter values: v1,v2,... or a:b:step
    #[arg(long, default_value = "-0.1:0.1:0.0005")]
    x_grid: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn config(kind: ExperimentKind, args: RunArgs) -> Result<(ExperimentConfig, OutputFormat)> {
    let mut cfg = ExperimentConfig::new(kind);
    if let Some(ch) = &args.channel {
        cfg.channel = ChannelSource::parse(ch);
    }
    if let Some(eta) = &args.eta {
        cfg.etas = parse_grid(eta)?;
    }
    if let Some(n) = args.n {
        cfg.n_probes = n;
    }
    if let Some(t) = args.t {
        cfg.t = t;
    }
    if let Some(x) = args.x {
        cfg.x = x;
    }
    if let Some(dx) = args.dx {
        cfg.dx = dx;
    }
    if let Some(tol) = args.tol {
        cfg.tol = tol;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(m) = args.max_iter {
        cfg.max_iter = m;
    }
    if let Some(m) = &args.method {
        cfg.method = m.parse::<SaddleMethod>().map_err(|e| anyhow::anyhow!("--method: {e}"))?;
    }
    if let Some(r) = args.restarts {
        cfg.restarts = r;
    }
    cfg.richardson = !args.no_richardson;
    cfg.output = args.out;
    let format = args.format.parse::<OutputFormat>()?;
    cfg.format = format;
    cfg.validate()?;
    Ok((cfg, format))
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn export(args: ExportArgs) -> Result<()> {
    let fam = match args.channel.as_str() {
        "dephasing" => channels::dephasing(args.eta)?,
        "spontaneous-emission" => channels::spontaneous_emission(args.eta)?,
        "xy-noise" => channels::xy_noise(args.eta)?,
        "unitary" => channels::unitary_family(&qmetro_core::numkit::pauli_z().scale(0.5), args.t)?,
        other => anyhow::bail!("--channel: cannot export '{other}'"),
    };
    let grid = parse_grid(&args.x_grid).map_err(|e| anyhow::anyhow!("{}", e.to_string().replace("--eta", "--x-grid")))?;
    emit(&export_channel_spec(&fam, &grid)?, args.out.as_ref())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let (kind, args) = match cli.command {
        Command::ExportChannel(a) => {
            export(a)?;
            return Ok(ExitCode::SUCCESS);
        }
        Command::QfiPoint(a) => (ExperimentKind::QfiPoint, a),
        Command::Saddle(a) => (ExperimentKind::Saddle, a),
        Command::SweepEta(a) => (ExperimentKind::SweepEta, a),
        Command::ProbeEntropy(a) => (ExperimentKind::ProbeEntropy, a),
        Command::NqubitDephasing(a) => (ExperimentKind::NqubitDephasing, a),
        Command::SeWithAncilla(a) => (ExperimentKind::SeWithAncilla, a),
        Command::AncillaCheck(a) => (ExperimentKind::AncillaCheck, a),
        Command::Counterexample(a) => (ExperimentKind::Counterexample, a),
    };
    let (cfg, format) = config(kind, args)?;
    let output = run_experiment(&cfg)?;
    emit(&output.render(format)?, cfg.output.as_ref())?;
    if output.unconverged() > 0 {
        return Ok(ExitCode::from(EXIT_UNCONVERGED));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
