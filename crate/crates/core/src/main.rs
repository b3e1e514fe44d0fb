use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hjb_ng::harness::{run, Command, ExperimentConfig, HarnessError, HarnessResult};

#[derive(Parser)]
#[command(name = "hjb-ng", version, about = "Nonlinear Galerkin HJB solutions and their cross-checks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the exponential-moment identities by Gauss-Laguerre quadrature.
    Identities(Common),
    /// Integrate the projected parameter ODE and compare with the closed form.
    NgSolve(Common),
    /// Solve the HJB by explicit finite differences and dump the field.
    FdSolve(Common),
    /// Error metrics of finite differences against the trial solution over N.
    Compare(Common),
    /// One-at-a-time parameter sweep of the trial-vs-FD error.
    Sweep(Common),
    /// Indifference prices, closed form and by bisection.
    Price(Common),
    /// Monte Carlo check of the value function under the trial control.
    McCheck(Common),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Spatial dimension of finite-difference runs (1, 2 or 3).
    #[arg(long)]
    d: Option<usize>,
    /// Grid level: 2^N + 1 points per axis.
    #[arg(long = "N")]
    level: Option<u32>,
    /// Rate constants for the zeta parameter: paper or oracle.
    #[arg(long)]
    mode: Option<String>,
    /// Error metric, e.g. mean_abs, mean_rel_pct, pointwise_abs(2;2), slice_mean(x=3.5).
    #[arg(long)]
    metric: Option<String>,
    /// Use the interest-rate sweep interval literally as [0.25, 0.1] instead of [0.025, 0.1].
    #[arg(long)]
    literal_r_range: bool,
    /// Extra `key=value` overrides.
    overrides: Vec<String>,
}

impl Cmd {
    fn split(self) -> (Command, Common) {
        match self {
            Cmd::Identities(c) => (Command::Identities, c),
            Cmd::NgSolve(c) => (Command::NgSolve, c),
            Cmd::FdSolve(c) => (Command::FdSolve, c),
            Cmd::Compare(c) => (Command::Compare, c),
            Cmd::Sweep(c) => (Command::Sweep, c),
            Cmd::Price(c) => (Command::Price, c),
            Cmd::McCheck(c) => (Command::McCheck, c),
        }
    }
}

/// Defaults, then the file, then positional overrides, then named flags.
fn build_config(common: &Common) -> HarnessResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    for o in &common.overrides {
        cfg.apply_override(o)?;
    }
    let flags = [
        ("seed", common.seed.map(|v| v.to_string())),
        ("d", common.d.map(|v| v.to_string())),
        ("N", common.level.map(|v| v.to_string())),
        ("mode", common.mode.clone()),
        ("metric", common.metric.clone()),
        ("literal_r_range", common.literal_r_range.then(|| "true".to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    Ok(cfg)
}

fn execute(command: Command, common: &Common) -> HarnessResult<i32> {
    let cfg = build_config(common)?;
    let mut out: Box<dyn Write> = match &common.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let mut diag = io::stderr().lock();
    let outcome = run(command, &cfg, &mut out, &mut diag)?;
    out.flush()?;
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let (command, common) = Cli::parse().command.split();
    let code = execute(command, &common).unwrap_or_else(|e: HarnessError| {
        eprintln!("error: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
