//! Steady-state Gaussian entanglement in a two-cavity optomechanical system
//! with a shared movable mirror.
//!
//! The pipeline runs parameters → operating point ([`model`]) → drift and
//! noise ([`dynamics`]) → stationary covariance ([`steady_state`]) →
//! logarithmic negativities ([`gaussian`]). [`io_relations`] maps field-field
//! correlations to measurable output light and back, and [`sde`] integrates
//! the Langevin equations directly as an independent check.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod gaussian;
pub mod io_relations;
pub mod model;
mod rng;
pub mod serde_matrix;
pub mod sde;
pub mod steady_state;
pub mod sweep;

pub use config::{load_config, parse_config};
pub use dynamics::{build_drift, build_noise, stability, DriftMatrix, NoiseMatrix, StabilityReport};
pub use error::{Error, Result};
pub use gaussian::{entanglement_report, log_negativity, EntanglementReport, Mode};
pub use model::{derive, CavityLabel, DerivedQuantities, PerCavity, SystemParams};
pub use rng::derive_seed;
pub use steady_state::{solve_lyapunov, CovarianceMatrix};
pub use sweep::{evaluate_point, PointEvaluation};
