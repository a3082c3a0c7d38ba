//! Front-end for the `fedcrypt` binary: privacy-cost queries, sampler
//! bounds, key generation, simulated training runs and σ sweeps.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fedcrypt::he::Backend;

use crate::commands::{AccountantQuery, RunOptions};
use crate::config::RunConfig;
pub use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "fedcrypt", version, about = "Differentially private federated averaging over encrypted updates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Privacy cost (ε at a given δ) of T rounds of the subsampled Gaussian mechanism.
    Accountant(AccountantArgs),
    /// Largest value each Gaussian sampler can emit with n-bit uniforms.
    Bounds {
        #[arg(long, default_value_t = 64)]
        n_bits: u32,
        /// Ziggurat tail cut-off.
        #[arg(long, default_value_t = commands::default_x_tail())]
        x_tail: f64,
    },
    /// Run a simulated training job from a config file.
    Run {
        config: PathBuf,
        /// Defaults to `<config stem>-out` in the working directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Override the config's `he_backend`.
        #[arg(long)]
        backend: Option<Backend>,
        /// Use Paillier keys from `fedcrypt keygen` instead of seeded ones.
        #[arg(long, conflicts_with = "backend")]
        key_dir: Option<PathBuf>,
    },
    /// Generate a Paillier key pair.
    Keygen {
        #[arg(long, default_value_t = 2048)]
        bits: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Derive the key from a seed instead of OS entropy.
        #[arg(long)]
        seed: Option<u64>,
        /// Allow keys shorter than 1024 bits.
        #[arg(long)]
        insecure_test_mode: bool,
    },
    /// ε (and, with --config, final eval accuracy) over a range of σ.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct AccountantArgs {
    /// Standard deviation of the aggregated noise.
    #[arg(long)]
    pub sigma: f64,
    /// Clipping bound.
    #[arg(long = "S")]
    pub clip_s: f64,
    /// Participants per round.
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Total clients.
    #[arg(long = "M")]
    pub m: Option<usize>,
    /// Participation ratio; alternative to --K/--M.
    #[arg(long)]
    pub q: Option<f64>,
    /// Rounds.
    #[arg(long = "T")]
    pub rounds: u64,
    #[arg(long)]
    pub delta: f64,
    /// Fraction of colluding participants.
    #[arg(long)]
    pub chi: Option<f64>,
    #[arg(long, default_value_t = fedcrypt::accountant::DEFAULT_MAX_ORDER)]
    pub max_order: u32,
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Inclusive range `start..end`.
    #[arg(long, value_parser = commands::parse_range)]
    pub sigma: (f64, f64),
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    /// Train at every σ with this config; privacy parameters come from it too.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "S", default_value_t = 1.0)]
    pub clip_s: f64,
    #[arg(long = "K", default_value_t = 1000)]
    pub k: usize,
    #[arg(long = "M", default_value_t = 3596)]
    pub m: usize,
    #[arg(long = "T", default_value_t = 100)]
    pub rounds: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub delta: f64,
}

impl AccountantArgs {
    pub fn query(&self) -> CliResult<AccountantQuery> {
        Ok(AccountantQuery {
            sigma: self.sigma,
            clip_s: self.clip_s,
            q: AccountantQuery::resolve_q(self.q, self.k, self.m)?,
            k: self.k,
            rounds: self.rounds,
            delta: self.delta,
            chi: self.chi,
            max_order: self.max_order,
        })
    }
}

fn sweep(args: &SweepArgs, out: &mut dyn Write) -> CliResult<()> {
    let sigmas = commands::sweep_values(args.sigma, args.step)?;
    let config = match &args.config {
        Some(p) => {
            let mut c = RunConfig::from_file(p)?;
            c.apply_seed_override()?;
            Some(c)
        }
        None => None,
    };
    let base = match &config {
        Some(c) => AccountantQuery {
            sigma: c.fed.sigma,
            clip_s: c.fed.clip_s,
            q: c.fed.q(),
            k: Some(c.fed.participants),
            rounds: c.fed.rounds.max(1) as u64,
            delta: c.fed.delta,
            chi: None,
            max_order: c.fed.max_moment_order,
        },
        None => AccountantQuery {
            sigma: sigmas[0],
            clip_s: args.clip_s,
            q: AccountantQuery::resolve_q(None, Some(args.k), Some(args.m))?,
            k: Some(args.k),
            rounds: args.rounds,
            delta: args.delta,
            chi: None,
            max_order: fedcrypt::accountant::DEFAULT_MAX_ORDER,
        },
    };
    commands::sweep(&sigmas, &base, config.as_ref(), out)
}

/// Execute a parsed command, writing results to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Accountant(a) => commands::accountant(&a.query()?, a.csv, out),
        Command::Bounds { n_bits, x_tail } => commands::bounds(n_bits, x_tail, out),
        Command::Run { config, out_dir, backend, key_dir } => {
            commands::run(&config, &RunOptions { out_dir, backend, key_dir }, out).map(|_| ())
        }
        Command::Keygen { bits, out_dir, seed, insecure_test_mode } => {
            commands::keygen(bits, &out_dir, seed, insecure_test_mode, out)
        }
        Command::Sweep(args) => sweep(&args, out),
    }
}

/// Parse `args`, run, report errors on stderr and return the exit code:
/// 0 on success, 2 on invalid arguments or config, 1 on run-time failure.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
