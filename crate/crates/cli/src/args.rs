use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "optomech", version, about = "Steady-state entanglement sweeps for a two-cavity optomechanical system")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// JSON parameter file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stability map over (Δ_b, P_b): Hurwitz minors C1, C2 and margin.
    Stability(StabilityArgs),
    /// Pairwise logarithmic negativities along Δ_b for several P_b.
    Negativity(NegativityArgs),
    /// Pairwise negativities and 1|2 NPT flags along an extended Δ_b sweep.
    Tripartite(TripartiteArgs),
    /// Simulated homodyne reconstruction of the field-field covariance.
    Reconstruct(ReconstructArgs),
    /// Stochastic integration cross-check of the Lyapunov solution.
    Oracle(OracleArgs),
    /// Everything computed at the configured working point, as JSON.
    Point(PointArgs),
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub common: Common,
    /// Points along Δ_b; P_b uses the same count.
    #[arg(long, default_value_t = 61)]
    pub points: usize,
    /// Points along P_b, if different from --points.
    #[arg(long)]
    pub pb_points: Option<usize>,
    /// Δ_b range in units of κ_a.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [-1.5, 1.5], allow_negative_numbers = true)]
    pub delta_b: Vec<f64>,
    /// Upper end of P_b as a fraction of P_a (excluded).
    #[arg(long, default_value_t = 1.0)]
    pub pb_max: f64,
}

#[derive(Debug, Args)]
pub struct NegativityArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    /// Δ_b range in units of ω_m.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [-3.0, 0.0], allow_negative_numbers = true)]
    pub delta_b: Vec<f64>,
    /// P_b values as fractions of P_a.
    #[arg(long, num_args = 1.., value_delimiter = ',', default_values_t = [0.0, 0.25, 0.5, 0.75, 1.0])]
    pub pb: Vec<f64>,
    /// Report E_N in bits instead of nats.
    #[arg(long)]
    pub log2: bool,
}

#[derive(Debug, Args)]
pub struct TripartiteArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 401)]
    pub points: usize,
    /// Largest |Δ_b|/ω_m; the sweep runs from 0 to this value.
    #[arg(long, default_value_t = 8.0)]
    pub abs_delta_b_max: f64,
    /// Sweep positive instead of negative Δ_b.
    #[arg(long)]
    pub positive: bool,
    /// P_b as a fraction of P_a.
    #[arg(long, default_value_t = 0.15)]
    pub pb: f64,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub common: Common,
    /// Acquisition time in seconds (default 1/κ_a).
    #[arg(long, allow_negative_numbers = true)]
    pub t_m: Option<f64>,
    /// Samples per phase setting.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Also write the raw homodyne record as CSV.
    #[arg(long)]
    pub export_samples: bool,
    /// Estimate from an existing sample CSV instead of simulating.
    #[arg(long)]
    pub samples_from: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Dimensionless system file; built-in desk defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub trajectories: usize,
    #[arg(long, default_value_t = 0.005)]
    pub dt: f64,
    #[arg(long, default_value_t = 400.0)]
    pub t_total: f64,
    #[arg(long, default_value_t = 150.0)]
    pub burn_in: f64,
    #[arg(long, default_value_t = 2007)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PointArgs {
    #[command(flatten)]
    pub common: Common,
}
