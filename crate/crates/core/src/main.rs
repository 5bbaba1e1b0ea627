use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};

use heterodyn::commands::{apply_overrides, run, Command, Overrides};
use heterodyn::scenario::parse_scenario;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CommandArg {
    Simulate,
    Equilibrium,
    PotentialCheck,
    AggregabilityDemo,
    Assumptions,
}

impl From<CommandArg> for Command {
    fn from(c: CommandArg) -> Self {
        match c {
            CommandArg::Simulate => Command::Simulate,
            CommandArg::Equilibrium => Command::Equilibrium,
            CommandArg::PotentialCheck => Command::PotentialCheck,
            CommandArg::AggregabilityDemo => Command::AggregabilityDemo,
            CommandArg::Assumptions => Command::Assumptions,
        }
    }
}

/// Evolutionary dynamics for populations with heterogeneous types.
///
/// Exit status: 0 when every check passes, 1 when a check fails,
/// 2 for invalid configuration or I/O errors.
#[derive(Debug, Parser)]
#[command(name = "heterodyn", version)]
struct Cli {
    command: CommandArg,
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the scenario's `outputs.directory`,
    /// then `out/<scenario name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: &Cli) -> anyhow::Result<bool> {
    let text = std::fs::read_to_string(&cli.config)
        .with_context(|| format!("reading {}", cli.config.display()))?;
    let mut cfg = parse_scenario(&text)?;
    let overrides = Overrides {
        seed: cli.seed,
        dt: cli.dt,
        t_end: cli.t_end,
    };
    apply_overrides(&mut cfg, &overrides)?;
    let out = cli.out.clone().unwrap_or_else(|| match &cfg.outputs.directory {
        Some(d) => PathBuf::from(d),
        None => PathBuf::from("out").join(&cfg.name),
    });

    let command = Command::from(cli.command);
    let outcome = run(command, &cfg, &out)?;
    for c in &outcome.checks {
        let mark = if c.passed { "PASS" } else { "FAIL" };
        println!("{mark} {}: {}", c.check, c.detail);
    }
    println!(
        "{} {}: {} check(s), {} failed; outputs in {}",
        command.name(),
        cfg.name,
        outcome.checks.len(),
        outcome.failures().len(),
        out.display()
    );
    Ok(outcome.passed())
}
