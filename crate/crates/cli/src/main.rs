use std::path::PathBuf;
use std::process::ExitCode;

use bjlab::campaign::{run, Command, RunOptions};
use bjlab::config::load_config;
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    VerifyUpper,
    VerifyLower,
    MinorOracle,
    HardyCheck,
    GreenScan,
    Localize,
    Lyapunov,
    Preflight,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::VerifyUpper => Command::VerifyUpper,
            Cmd::VerifyLower => Command::VerifyLower,
            Cmd::MinorOracle => Command::MinorOracle,
            Cmd::HardyCheck => Command::HardyCheck,
            Cmd::GreenScan => Command::GreenScan,
            Cmd::Localize => Command::Localize,
            Cmd::Lyapunov => Command::Lyapunov,
            Cmd::Preflight => Command::Preflight,
        }
    }
}

/// Verification campaigns for quasi-periodic block Jacobi operators.
///
/// Exit status: 0 on PASS or WARN, 1 on FAIL or a campaign error, 2 on a
/// usage or configuration error.
#[derive(Debug, Parser)]
#[command(name = "bjlab", version)]
struct Args {
    command: Cmd,

    /// TOML configuration with [spec] and [campaign] sections.
    #[arg(long)]
    config: PathBuf,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value = "reports")]
    out: PathBuf,

    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,

    /// Overrides campaign.radii (hardy-check).
    #[arg(long, value_delimiter = ',', num_args = 1)]
    radii: Option<Vec<f64>>,

    /// Overrides campaign.energies.
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true)]
    energies: Option<Vec<f64>>,

    /// Integer matrix file for minor-oracle; a seeded random matrix otherwise.
    #[arg(long)]
    matrix: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut config = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    if let Some(r) = args.radii {
        config.campaign.radii = r;
    }
    if let Some(e) = args.energies {
        config.campaign.energies = e;
    }
    if let Err(e) = config.revalidate() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let opts = RunOptions {
        seed: args.seed,
        out_dir: args.out,
        threads: args.threads,
        matrix: args.matrix,
    };
    let command = Command::from(args.command);
    match run(command, &config, &opts) {
        Ok(outcome) => {
            println!("{command}: {:?}", outcome.report.verdict);
            for (k, v) in &outcome.report.summary {
                println!("  {k} = {v}");
            }
            for n in &outcome.report.notes {
                println!("  note: {n}");
            }
            println!("wrote {}", outcome.json_path.display());
            for p in &outcome.csv_paths {
                println!("wrote {}", p.display());
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
