use std::path::PathBuf;
use std::process::ExitCode;

use bergman::config::{Format, RunConfig, Suite};
use bergman::report;
use clap::{Args, Parser, Subcommand};

/// Asymptotic Bergman kernels for real-analytic weights, with exact oracles.
#[derive(Parser)]
#[command(name = "bergman", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the weight, polarize it and check the contour margins.
    Validate(Common),
    /// Solve the amplitude and estimate its growth constant.
    Amplitude(Common),
    /// Assemble the kernel and measure reproducing errors over the h-grid.
    Kernel(Common),
    /// Run the oracle suites.
    Verify(Common),
    /// Run the suites selected in the config.
    Report(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated h values, overriding the config.
    #[arg(long, value_delimiter = ',')]
    h_grid: Option<Vec<f64>>,
    /// Amplitude order, overriding the config.
    #[arg(long)]
    order: Option<usize>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

fn execute(cli: Cli) -> bergman::Result<bool> {
    let (common, suites): (Common, Option<Vec<Suite>>) = match cli.command {
        Command::Validate(c) => (c, Some(vec![Suite::Validate])),
        Command::Amplitude(c) => (c, Some(vec![Suite::Validate, Suite::Amplitude])),
        Command::Kernel(c) => (c, Some(vec![Suite::Validate, Suite::Amplitude, Suite::Kernel])),
        Command::Verify(c) => (c, Some(Suite::ORACLES.to_vec())),
        Command::Report(c) => (c, None),
    };
    let text = std::fs::read_to_string(&common.config)?;
    let mut config: RunConfig =
        serde_json::from_str(&text).map_err(|e| bergman::Error::ConfigInvalid(e.to_string()))?;
    if let Some(s) = suites {
        config.suites = s;
    }
    let config = config.with_overrides(common.h_grid, common.order)?;
    let r = report::run(&config)?;
    for path in report::emit(&r, common.format, &common.out)? {
        println!("{}", path.display());
    }
    let failures = r.failures();
    for f in &failures {
        eprintln!("suite {f} failed");
    }
    Ok(failures.is_empty())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
