//! Command-line pipeline for SPAD photon number-state reconstruction:
//! characterize a detector from time tags, build its matrix model,
//! reconstruct number distributions, simulate click data, histogram delays,
//! and propagate uncertainties.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "spad-recon", version, about = "Photon number-state reconstruction with a single SPAD")]
struct Cli {
    /// Cap on worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit detector parameters from dark and illuminated tag files.
    Characterize {
        /// Dark (no signal light) tag file.
        #[arg(long)]
        dark: PathBuf,
        /// Illuminated cw tag files at distinct rates (repeatable).
        #[arg(long = "lit")]
        lit: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output report path (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the detector matrix from parameters and a photon profile.
    BuildMatrix {
        /// Detector parameter JSON (a characterization report works too).
        #[arg(long)]
        detector: PathBuf,
        /// Estimate the profile from this tag file (needs [window] config).
        #[arg(long)]
        tags: Option<PathBuf>,
        /// Two-column profile file (bin start in s, value).
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct the photon-number distribution of a pulsed tag file.
    Reconstruct {
        #[arg(long)]
        tags: PathBuf,
        #[arg(long)]
        detector: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for distribution.json, metrics.json, plotdata.tsv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a detector and write a tag file.
    Simulate {
        /// Simulation config with [detector] and [sim] sections.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Tag file format: text or binary.
        #[arg(long, default_value = "text")]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Histogram click-pair delays from a tag file.
    Hist {
        #[arg(long)]
        tags: PathBuf,
        /// first-and-n or full.
        #[arg(long, default_value = "first-and-n")]
        kind: String,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 6)]
        bin_ticks: u64,
        /// Largest delay histogrammed, in seconds.
        #[arg(long)]
        max_delay: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo uncertainty propagation for a reconstruction.
    Uncertainty {
        #[arg(long)]
        tags: PathBuf,
        #[arg(long)]
        detector: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if cli.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    let result = match &cli.command {
        Command::Characterize { dark, lit, config, seed, out } => {
            commands::cmd_characterize(dark, lit, config.as_deref(), *seed, out)
        }
        Command::BuildMatrix { detector, tags, profile, config, out } => {
            commands::cmd_build_matrix(
                detector,
                tags.as_deref(),
                profile.as_deref(),
                config.as_deref(),
                out,
            )
        }
        Command::Reconstruct { tags, detector, config, out } => {
            commands::cmd_reconstruct(tags, detector, config.as_deref(), out)
        }
        Command::Simulate { config, seed, format, out } => {
            commands::cmd_simulate(config, *seed, format, out)
        }
        Command::Hist { tags, kind, n, bin_ticks, max_delay, out } => {
            commands::cmd_hist(tags, kind, *n, *bin_ticks, *max_delay, out)
        }
        Command::Uncertainty { tags, detector, config, seed, out } => {
            commands::cmd_uncertainty(tags, detector, config.as_deref(), *seed, out)
        }
    };
    if let Err(e) = result {
        eprintln!("error: {:#}", e.error);
        std::process::exit(e.code);
    }
}
