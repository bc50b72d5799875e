use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "sgdlab", version, about = "SGD particle systems, their scaling limits and fluctuations")]
pub struct Cli {
    /// Experiment config file (TOML). Required by `simulate` and `sweep`;
    /// supplies defaults for the solver subcommands.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Base seed for all random substreams; overrides the config's seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,

    /// Output directory [default: the config's `out`, else ./out].
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Worker threads [default: all cores].
    #[arg(long, global = true, value_name = "N", env = "SGDLAB_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the config's sweep and also export every stored SGD state to trajectory.csv.
    Simulate(SweepArgs),
    /// Run the config's (d, T) sweep: MSE/PE curves, fluctuation samples, manifest.
    Sweep(SweepArgs),
    /// Solve the deterministic limit ODE and write solution.csv.
    SolveOde(LimitArgs),
    /// Sample paths of the moderate/high-noise limit SDE and write solution.csv.
    SolveSde(SdeArgs),
    /// Sample paths of the fluctuation SDE and write solution.csv.
    SolveFluctuation(FluctuationArgs),
    /// Solve one fluctuation path by Picard iteration and compare with the eigenbasis solver.
    Picard(PicardArgs),
    /// Check the grid embedding error of a kernel against 2C₃/d.
    ValidateCovariance(ValidateArgs),
    /// Classify (d, T, η, σ, γ) into a noise regime and print regime.json.
    Regime(RegimeArgs),
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Overrides the config's replication count.
    #[arg(long)]
    pub replications: Option<u32>,
}

#[derive(Debug, Args)]
pub struct LimitArgs {
    /// Kernel preset: example1, example2 or constant:<c>.
    #[arg(long)]
    pub model: Option<String>,

    /// Harmonic truncation K for example2.
    #[arg(long)]
    pub truncation: Option<u32>,

    /// Spatial grid size of the solver [default: 256].
    #[arg(long)]
    pub n: Option<usize>,

    /// Drift scale α [default: 1].
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Time horizon τ [default: 1].
    #[arg(long)]
    pub tau: Option<f64>,

    /// Time step [default: min(1e-3, 1/(20αλ_max))].
    #[arg(long)]
    pub dt: Option<f64>,

    /// Store every k-th time step in the output [default: about 100 stored times].
    #[arg(long)]
    pub stride: Option<usize>,

    /// Initial profile: constant:<v>, cosine:<amplitude>:<k>, mixed or random:<seed>:<modes>
    /// [default: constant:1].
    #[arg(long)]
    pub init: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    EulerMaruyama,
    ExactOu,
}

#[derive(Debug, Args)]
pub struct SdeArgs {
    #[command(flatten)]
    pub limit: LimitArgs,

    /// Noise scale β [default: 1].
    #[arg(long)]
    pub beta: Option<f64>,

    /// Number of sample paths.
    #[arg(long, default_value_t = 1)]
    pub paths: u32,

    /// Time-stepping scheme [default: the config's, else exact-ou].
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,

    /// Drop the drift: dΘ = α dξ₁ (high-noise limit).
    #[arg(long)]
    pub no_drift: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RegimeArg {
    ParticleInteraction,
    NoiseDominates,
    InterpolationError,
}

#[derive(Debug, Args)]
pub struct FluctuationParams {
    #[command(flatten)]
    pub limit: LimitArgs,

    /// Noise scale β.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,

    /// Particle-interaction scale ζ.
    #[arg(long, default_value_t = 1.0)]
    pub zeta: f64,

    /// Which terms of the fluctuation equation are active.
    #[arg(long, value_enum, default_value = "particle-interaction")]
    pub regime: RegimeArg,
}

#[derive(Debug, Args)]
pub struct FluctuationArgs {
    #[command(flatten)]
    pub params: FluctuationParams,

    /// Number of sample paths.
    #[arg(long, default_value_t = 1)]
    pub paths: u32,
}

#[derive(Debug, Args)]
pub struct PicardArgs {
    #[command(flatten)]
    pub params: FluctuationParams,

    /// Maximum number of Picard maps.
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,

    /// Stop once successive iterates differ by at most this (sup norm).
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Kernel preset: example1, example2 or constant:<c>.
    #[arg(long, default_value = "example1")]
    pub model: String,

    /// Harmonic truncation K for example2.
    #[arg(long)]
    pub truncation: Option<u32>,

    /// Number of grid points.
    #[arg(long)]
    pub d: usize,
}

#[derive(Debug, Args)]
pub struct RegimeArgs {
    /// Dimension.
    #[arg(long)]
    pub d: usize,

    /// Number of iterations per unit of rescaled time.
    #[arg(long = "T", value_name = "T")]
    pub t: f64,

    /// Observation-noise standard deviation.
    #[arg(long)]
    pub sigma: f64,

    /// Step size η.
    #[arg(long, conflicts_with = "eta_alpha", required_unless_present = "eta_alpha")]
    pub eta: Option<f64>,

    /// Sets η = α/(dT) for the given α.
    #[arg(long)]
    pub eta_alpha: Option<f64>,

    /// Fluctuation scale: sqrtT or a number.
    #[arg(long)]
    pub gamma: Option<String>,

    /// Lower noise-ratio threshold.
    #[arg(long, default_value_t = 1e-2)]
    pub threshold_low: f64,

    /// Upper noise-ratio threshold.
    #[arg(long, default_value_t = 1e2)]
    pub threshold_high: f64,
}
