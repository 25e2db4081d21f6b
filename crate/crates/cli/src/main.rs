//! Command-line orchestration for the Hurwitz-space toolkit.
//!
//! Subcommands: `enumerate`, `orbits`, `dims`, `solve-metric`, `wp-norm`,
//! `convergence`, `identity-check`. Options can come from a flat key=value
//! config file (`--config`), with command-line flags taking precedence.
//! Output files are JSON (results) or CSV (per-vertex fields) and embed the
//! fully resolved configuration together with its SHA-256 hash.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 enumeration budget
//! exceeded, 4 solver failure.

mod config;
mod output;
mod runner;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "hurwitz", version, about = "Hurwitz spaces: covering combinatorics, hyperbolic metrics, and the generalized Weil-Petersson form")]
struct Cli {
    /// Flat key=value configuration file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,
    /// Output directory (default: $HURWITZ_OUT or the working directory).
    #[arg(long, global = true)]
    out: Option<std::path::PathBuf>,
    /// Worker threads for independent solves.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate conjugation classes of transposition monodromy data.
    Enumerate {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        b: Option<usize>,
    },
    /// Partition enumerated classes into braid-move orbits.
    Orbits {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        b: Option<usize>,
    },
    /// Deformation-cohomology dimension profile of a covering type.
    Dims {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        h: Option<usize>,
        #[arg(long)]
        b: Option<usize>,
    },
    /// Solve the hyperbolic metric on a branched-cover surface.
    SolveMetric {
        /// Configuration preset: `hexagon` (n=2, b=6) or `square3` (n=3, b=4).
        #[arg(long)]
        preset: Option<String>,
        /// Branch points as `re,im;re,im;...`.
        #[arg(long)]
        points: Option<String>,
        /// Transpositions as `a b;a b;...` (1-based sheet labels).
        #[arg(long)]
        transpositions: Option<String>,
        /// Sheet count (with --transpositions).
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long)]
        refinement: Option<usize>,
        /// Write per-vertex fields (u, density, defect) as CSV.
        #[arg(long)]
        dump_fields: bool,
        /// Write the cover mesh as JSON.
        #[arg(long)]
        mesh_out: bool,
    },
    /// Weil-Petersson norm of a branch-point-moving direction.
    WpNorm {
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        points: Option<String>,
        #[arg(long)]
        transpositions: Option<String>,
        #[arg(long)]
        degree: Option<usize>,
        /// Moving branch point (0-based). Mutually exclusive with --velocities.
        #[arg(long)]
        moving: Option<usize>,
        /// Complex velocity per branch point, `re,im;re,im;...`.
        #[arg(long)]
        velocities: Option<String>,
        /// Finite-difference step; chosen by the Richardson check when absent.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        refinement: Option<usize>,
        /// Write per-vertex φ and ‖μ‖² as CSV.
        #[arg(long)]
        dump_fields: bool,
    },
    /// Convergence study across refinement levels.
    Convergence {
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        points: Option<String>,
        #[arg(long)]
        transpositions: Option<String>,
        #[arg(long)]
        degree: Option<usize>,
        /// Comma-separated refinement levels, strictly increasing.
        #[arg(long)]
        refinements: Option<String>,
        #[arg(long)]
        moving: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Pointwise fiber-integrand identity on random tensors.
    IdentityCheck {
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() {
    let cli = Cli::parse();
    let exit = match runner::run(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {:#}", err.error);
            err.code
        }
    };
    std::process::exit(exit);
}

pub(crate) struct CliError {
    pub code: i32,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn invalid(error: anyhow::Error) -> Self {
        CliError { code: 2, error }
    }
    pub fn budget(error: anyhow::Error) -> Self {
        CliError { code: 3, error }
    }
    pub fn solver(error: anyhow::Error) -> Self {
        CliError { code: 4, error }
    }
}
