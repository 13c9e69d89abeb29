use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use liquid_s4::liquid::LiquidMode;
use liquid_s4_cli::commands;
use liquid_s4_cli::config::RunConfig;
use liquid_s4_cli::CliError;

#[derive(Parser)]
#[command(name = "liquid-s4", version, about = "Liquid structural state-space kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the HiPPO-LegS matrix and its DPLR decomposition (size from --state)
    Hippo(Common),
    /// Generate the main kernel and, for liquid modes, the per-order liquid kernels
    Kernel {
        #[command(flatten)]
        common: Common,
        /// Fail unless the fast kernel matches the recurrent one
        #[arg(long)]
        verify: bool,
    },
    /// Run the liquid-S4 forward map over a sequence file (LSQ4 binary or CSV)
    Convolve {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Fail unless the output matches an independent reference
        #[arg(long)]
        verify: bool,
    },
    /// Run the invariant suite
    Verify {
        #[command(flatten)]
        common: Common,
        /// Corrupt one kernel tap; the suite must then fail
        #[arg(long, hide = true)]
        poison: bool,
    },
    /// Time the kernel paths over a sweep of sequence lengths
    Bench(Common),
    /// Train a small model on a synthetic task with finite differences
    TrainDemo(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags override its keys
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["kb", "pb", "none"])]
    mode: Option<String>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    state: Option<usize>,
    #[arg(long)]
    features: Option<usize>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(m) = &self.mode {
            cfg.mode = m.parse::<LiquidMode>().map_err(|e| CliError::Usage(e.to_string()))?;
        }
        if let Some(v) = self.order {
            cfg.order = v;
        }
        if self.window.is_some() {
            cfg.window = self.window;
        }
        if self.length.is_some() {
            cfg.length = self.length;
        }
        if self.state.is_some() {
            cfg.state = self.state;
        }
        if self.features.is_some() {
            cfg.features = self.features;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Hippo(c) => Ok(commands::cmd_hippo(&c.resolve()?, c.out.as_deref())?.stdout),
        Command::Kernel { common: c, verify } => {
            Ok(commands::cmd_kernel(&c.resolve()?, verify, c.out.as_deref())?.stdout)
        }
        Command::Convolve {
            input,
            common: c,
            verify,
        } => Ok(commands::cmd_convolve(&c.resolve()?, &input, verify, c.out.as_deref())?.stdout),
        Command::Verify { common: c, poison } => {
            let (outcome, report) = commands::cmd_verify(&c.resolve()?, poison, c.out.as_deref())?;
            print!("{}", outcome.stdout);
            if report.passed {
                eprintln!("verify: {} invariants passed", report.invariants.len());
                Ok(String::new())
            } else {
                Err(CliError::Verification(format!(
                    "failed invariants: {}",
                    report.failed.join(", ")
                )))
            }
        }
        Command::Bench(c) => Ok(commands::cmd_bench(&c.resolve()?, c.out.as_deref())?.stdout),
        Command::TrainDemo(c) => Ok(commands::cmd_train_demo(&c.resolve()?, c.out.as_deref())?.stdout),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(stdout) => {
            print!("{stdout}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
