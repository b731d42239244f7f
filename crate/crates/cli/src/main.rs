//! `rootoram`: simulations, accounting, verification and the storage server.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use root_oram::params::{p_from_exponent, ParamsBuilder};
use root_oram::{CipherKind, Lambda, Params};

#[derive(Debug, Parser)]
#[command(name = "rootoram", version, about = "Tunable differentially private tree ORAM")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, env = "ROOTORAM_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Write results here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format. Scalar results default to `key=value` lines.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    /// Tree height; N = 2^L blocks.
    #[arg(long = "L", default_value_t = 10)]
    pub levels: u32,
    /// Levels of internal buckets (defaults to L).
    #[arg(long)]
    pub k: Option<u32>,
    /// Bucket size.
    #[arg(long = "Z", default_value_t = 4)]
    pub z: usize,
    /// Remap probability (defaults to 1 - 1/N).
    #[arg(long, conflicts_with = "p_i")]
    pub p: Option<f64>,
    /// Remap probability as p = 1 - 2^-i.
    #[arg(long = "p-i")]
    pub p_i: Option<u32>,
    /// Fake access rate, or `inf`.
    #[arg(long, default_value = "inf")]
    pub lambda: Lambda,
    /// Block payload size in bytes.
    #[arg(long = "B", default_value_t = 64)]
    pub block_size: usize,
}

impl ParamArgs {
    pub fn build(&self) -> root_oram::Result<Params> {
        let mut builder = ParamsBuilder::new(self.levels)
            .k(self.k.unwrap_or(self.levels))
            .z(self.z)
            .block_size(self.block_size)
            .lambda(self.lambda);
        if let Some(p) = self.p {
            builder = builder.p(p);
        }
        if let Some(i) = self.p_i {
            builder = builder.p(p_from_exponent(i));
        }
        builder.build()
    }
}

#[derive(Debug, Clone, Args)]
pub struct ThrottleArgs {
    /// Bandwidth limit in bits per second.
    #[arg(long = "rate-bps")]
    pub rate_bps: Option<f64>,
    /// Token bucket depth in bytes.
    #[arg(long = "burst-bytes", default_value_t = 1500)]
    pub burst_bytes: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run M uniformly random accesses and report stash and privacy figures.
    Simulate {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long = "M")]
        m: u64,
        /// Use a running `serve` instance instead of local memory.
        #[arg(long)]
        connect: Option<String>,
        #[command(flatten)]
        throttle: ThrottleArgs,
        #[arg(long, default_value = "null")]
        cipher: CipherKind,
    },
    /// Simulate every cell of a JSON grid.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
    },
    /// Maximum stash as a function of M from a single run.
    Mgrowth {
        #[arg(long = "L", default_value_t = 10)]
        levels: u32,
        #[arg(long, default_value_t = 7)]
        k: u32,
        #[arg(long = "Z", default_value_t = 4)]
        z: usize,
        #[arg(long, default_value = "1")]
        lambda: Lambda,
        /// Checkpoints (defaults to N, 2N, ..., 128N).
        #[arg(long = "M", value_delimiter = ',')]
        m: Vec<u64>,
    },
    /// Privacy, bandwidth, composition and recursion figures.
    Accountant {
        #[arg(long = "N")]
        n: Option<u64>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long = "Z")]
        z: Option<usize>,
        #[arg(long)]
        k: Option<u32>,
        #[arg(long, default_value = "inf")]
        lambda: Lambda,
        /// Stash bound used for delta.
        #[arg(long = "C", default_value_t = 0)]
        stash_bound: u64,
        /// Number of differing accesses to compose over.
        #[arg(long)]
        compose: Option<u64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        /// Recursion rounds.
        #[arg(long)]
        rounds: Option<u32>,
        /// Single-level outsourcing ratio for recursion.
        #[arg(long = "R")]
        ratio: Option<f64>,
    },
    /// Pick p for a target epsilon, or k for a bandwidth budget.
    Solve {
        #[arg(long = "N")]
        n: Option<u64>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Blocks per real access.
        #[arg(long)]
        bandwidth: Option<f64>,
        #[arg(long = "Z", default_value_t = 4)]
        z: usize,
        #[arg(long, default_value = "inf")]
        lambda: Lambda,
        #[arg(long = "L", default_value_t = 40)]
        levels: u32,
    },
    /// Exhaustively check the ratio bound on a tiny instance.
    Verify {
        #[arg(long = "N")]
        n: u64,
        /// Exact remap probability, e.g. `1/2`.
        #[arg(long)]
        p: String,
        #[arg(long = "M")]
        m: usize,
        #[arg(long)]
        capacity: u64,
        /// Distinct elements in the real sequences (defaults to min(M, 4)).
        #[arg(long)]
        elements: Option<u64>,
    },
    /// Entropy, KL divergence and k-anonymity of CSV inputs.
    Metrics {
        /// `outcome,mass` rows.
        #[arg(long)]
        dist: Option<PathBuf>,
        /// Reference distribution for KL (uniform over the support if absent).
        #[arg(long)]
        against: Option<PathBuf>,
        /// `input,output,mass` rows.
        #[arg(long)]
        channel: Option<PathBuf>,
        /// Report in bits instead of nats.
        #[arg(long)]
        bits: bool,
    },
    /// Serve a bucket store over TCP.
    Serve {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value = "127.0.0.1:7700")]
        listen: String,
        #[command(flatten)]
        throttle: ThrottleArgs,
        /// Load the store from here if it exists and save it after each session.
        #[arg(long)]
        snapshot: Option<PathBuf>,
        /// Stop after this many sessions (0 serves forever).
        #[arg(long, default_value_t = 0)]
        sessions: u64,
        #[arg(long, default_value = "null")]
        cipher: CipherKind,
    },
    /// Access latency over loopback.
    Bench {
        #[arg(long = "L", default_value_t = 10)]
        levels: u32,
        #[arg(long, value_delimiter = ',', default_value = "1,4,7,10")]
        k: Vec<u32>,
        #[arg(long = "Z", value_delimiter = ',', default_value = "2")]
        z: Vec<usize>,
        #[arg(long = "B", value_delimiter = ',', default_value = "1024")]
        block_size: Vec<usize>,
        /// Bandwidth limits in bits per second; 0 means unthrottled.
        #[arg(long = "rate-bps", value_delimiter = ',', default_value = "0")]
        rate_bps: Vec<f64>,
        #[arg(long = "burst-bytes", default_value_t = 1500)]
        burst_bytes: usize,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long, default_value = "inf")]
        lambda: Lambda,
        #[arg(long, default_value_t = 20)]
        accesses: usize,
        #[arg(long, default_value = "null")]
        cipher: CipherKind,
    },
    /// Write or inspect store snapshots.
    #[command(subcommand)]
    Snapshot(SnapshotCommand),
}

#[derive(Debug, Subcommand)]
pub enum SnapshotCommand {
    /// Build a store, run M random accesses and save it.
    Save {
        path: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long = "M", default_value_t = 0)]
        m: u64,
        #[arg(long, default_value = "null")]
        cipher: CipherKind,
    },
    /// Check a snapshot and count its real blocks.
    Load {
        path: PathBuf,
        #[arg(long, default_value = "null")]
        cipher: CipherKind,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
