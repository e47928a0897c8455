//! `scnet` command line: analytical matrices, transient traces, matrix
//! extraction, and channel measurements from flat config files.
//!
//! Exit codes: 0 success, 2 config/usage errors, 3 simulation failures.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use scnet::Error;

#[derive(Parser)]
#[command(
    name = "scnet",
    version,
    about = "Multi-port modeling of switched-capacitor converter ladders and the \
             load-coupling channel across their shared supply rail"
)]
struct Cli {
    /// Directory for generated CSV and report files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Worker threads for sweep points.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Reserved; simulations are deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExtractMode {
    Current,
    Resistor,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepKind {
    Freq,
    Rate,
    Offchip,
}

#[derive(Subcommand)]
enum Command {
    /// Analytical port matrices from the converter config.
    Analyze {
        /// Fast switching limit matrix.
        #[arg(long)]
        fsl: bool,
        /// Slow switching limit matrix.
        #[arg(long)]
        ssl: bool,
        /// Approximate combined estimate (fast limit plus slow-limit diagonal).
        #[arg(long)]
        combined: bool,
        config: PathBuf,
    },
    /// Measure the port matrix from transient simulation.
    Extract {
        /// Override the config switching frequency (SI suffixes allowed).
        #[arg(long)]
        frequency: Option<String>,
        #[arg(long, value_enum, default_value = "current")]
        mode: ExtractMode,
        /// Test current for current-mode probing, amperes.
        #[arg(long, default_value = "10m")]
        i_test: String,
        /// Probing load for resistor mode, ohms.
        #[arg(long, default_value = "50")]
        r_fixed: String,
        /// Idle load for resistor mode, ohms.
        #[arg(long, default_value = "1M")]
        r_open: String,
        config: PathBuf,
    },
    /// Run a transient and export the trace as CSV.
    Transient {
        /// Simulated time span, seconds.
        #[arg(long)]
        duration: String,
        /// Per-stage load resistances, comma list; omitted stages idle open.
        #[arg(long)]
        loads: Option<String>,
        config: PathBuf,
    },
    /// Transmit a bit pattern through the supply rail or sweep the channel.
    Covert {
        #[arg(long, value_enum)]
        sweep: Option<SweepKind>,
        /// Override the config bit pattern.
        #[arg(long)]
        bits: Option<String>,
        /// Override the config bit rate, bits per second.
        #[arg(long)]
        rate: Option<String>,
        /// Sensor resolution for bandwidth read-off, volts.
        #[arg(long, default_value = "2m")]
        resolution: String,
        /// Switching frequencies for --sweep freq, comma list.
        #[arg(long)]
        frequencies: Option<String>,
        /// Bit rates for --sweep rate, comma list.
        #[arg(long)]
        rates: Option<String>,
        /// Off-chip resistances for --sweep offchip, comma list.
        #[arg(long)]
        roff: Option<String>,
        config: PathBuf,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config { .. } | Error::InvalidSpec(_) | Error::InvalidInput(_) | Error::Channel(_) => 2,
        Error::NonConvergence { .. } | Error::Diverged { .. } | Error::Singular(_) => 3,
        Error::Assembly(_) => 2,
        Error::Io(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = commands::Context {
        out_dir: cli.out,
        jobs: cli.jobs.max(1),
        seed: cli.seed,
    };
    let result = match cli.command {
        Command::Analyze {
            fsl,
            ssl,
            combined,
            config,
        } => commands::analyze(&ctx, &config, fsl, ssl, combined),
        Command::Extract {
            frequency,
            mode,
            i_test,
            r_fixed,
            r_open,
            config,
        } => commands::extract(
            &ctx,
            &config,
            frequency.as_deref(),
            mode == ExtractMode::Resistor,
            &i_test,
            &r_fixed,
            &r_open,
        ),
        Command::Transient {
            duration,
            loads,
            config,
        } => commands::transient(&ctx, &config, &duration, loads.as_deref()),
        Command::Covert {
            sweep,
            bits,
            rate,
            resolution,
            frequencies,
            rates,
            roff,
            config,
        } => {
            let sweep = sweep.map(|s| match s {
                SweepKind::Freq => commands::Sweep::Frequency,
                SweepKind::Rate => commands::Sweep::BitRate,
                SweepKind::Offchip => commands::Sweep::Offchip,
            });
            commands::covert(
                &ctx,
                &config,
                sweep,
                bits.as_deref(),
                rate.as_deref(),
                &resolution,
                frequencies.as_deref(),
                rates.as_deref(),
                roff.as_deref(),
            )
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
