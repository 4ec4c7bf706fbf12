//! `affinejd`: solve generalized Riccati equations, evaluate affine transforms,
//! probe explosion and simulate affine jump-diffusions from JSON model files.
//!
//! Exit status: 0 on success, 2 for invalid input (flags, model files,
//! dimensions) or a failed validation, 1 for numerical failures.

mod commands;
mod parse;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use parse::{Complexes, Counts, Reals};

#[derive(Parser, Debug)]
#[command(name = "affinejd", version, about = "Affine jump-diffusions: Riccati solves, transforms and Monte Carlo checks")]
pub struct Cli {
    /// Emit CSV instead of JSON.
    #[arg(long, global = true)]
    pub csv: bool,

    /// Worker threads for simulation (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Relative tolerance of the Riccati integrator.
    #[arg(long, global = true)]
    pub rel_tol: Option<f64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArg {
    /// Model file (JSON).
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the Riccati system for (ψ₀, ψ) on [0, T].
    Solve {
        #[command(flatten)]
        model: ModelArg,
        /// Initial value, comma separated complex numbers such as `0.5,1-2i`.
        #[arg(long, allow_hyphen_values = true)]
        u: Complexes,
        #[arg(long = "T")]
        horizon: f64,
    },
    /// Explosion time of the Riccati solution started at u.
    Explosion {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, allow_hyphen_values = true)]
        u: Complexes,
        #[arg(long)]
        t_max: f64,
    },
    /// E_x exp(uᵀX_t).
    Transform {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, allow_hyphen_values = true)]
        u: Complexes,
        #[arg(long, allow_hyphen_values = true)]
        x: Reals,
        #[arg(long)]
        t: f64,
    },
    /// Boundary of the real effective domain along a ray at horizon T.
    Ray {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, allow_hyphen_values = true)]
        direction: Reals,
        #[arg(long = "T")]
        horizon: f64,
        /// Largest multiple of the direction probed.
        #[arg(long, default_value_t = 100.0)]
        lambda_max: f64,
    },
    /// Euler Monte Carlo paths; summary statistics and optional transform estimates.
    Simulate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, allow_hyphen_values = true)]
        x0: Reals,
        #[arg(long, default_value_t = 10_000)]
        n_paths: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long = "T")]
        horizon: f64,
        /// Seed; falls back to AFFINE_SEED, then 0.
        #[arg(long, env = "AFFINE_SEED")]
        seed: Option<u64>,
        /// Number of recorded intervals between 0 and T.
        #[arg(long, default_value_t = 10)]
        records: usize,
        /// Also estimate E exp(uᵀX_T) and compare it with the Riccati value.
        #[arg(long, allow_hyphen_values = true)]
        u: Option<Complexes>,
    },
    /// Admissibility check plus a small suite of transform identities.
    Validate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, env = "AFFINE_SEED")]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Transforms of the Gaussian-damped jump models for increasing n.
    Damp {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, allow_hyphen_values = true)]
        u: Complexes,
        #[arg(long, allow_hyphen_values = true)]
        x: Reals,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value = "10,100,1000")]
        n_list: Counts,
    },
    /// Infinite-divisibility residual of the n-scaled model.
    Idcheck {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, allow_hyphen_values = true)]
        u: Complexes,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value = "2,5,10")]
        n: Counts,
    },
    /// Cone utilities for models on the orthant, PSD or Lorentz cone.
    ConeCheck {
        #[command(flatten)]
        model: ModelArg,
        #[command(subcommand)]
        check: ConeCheck,
    },
}

#[derive(Subcommand, Debug)]
pub enum ConeCheck {
    /// Whether u ⪯ v in the cone order.
    Leq {
        #[arg(long, allow_hyphen_values = true)]
        u: Reals,
        #[arg(long, allow_hyphen_values = true)]
        v: Reals,
    },
    /// The boundary function Φ at x.
    Phi {
        #[arg(long, allow_hyphen_values = true)]
        x: Reals,
    },
    /// Order preservation of (ψ₀, ψ) for u ⪯ v in -E.
    Monotonicity {
        #[arg(long, allow_hyphen_values = true)]
        u: Reals,
        #[arg(long, allow_hyphen_values = true)]
        v: Reals,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 20)]
        grid: usize,
    },
    /// Re ψ stays in -int(E) for Re u in -int(E).
    Interior {
        #[arg(long, allow_hyphen_values = true)]
        u: Complexes,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 20)]
        grid: usize,
    },
    /// Whether the jump weights off the lattice uᵀz ∈ 2πℤ are in the cone interior.
    Regularity {
        #[arg(long, allow_hyphen_values = true)]
        u: Reals,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            if !e.output.is_empty() {
                print!("{}", e.output);
            }
            eprintln!("error: {}: {}", e.operation, e.message);
            ExitCode::from(e.code)
        }
    }
}
