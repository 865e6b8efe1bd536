//! Euler–Maruyama ensemble integration of the linear Langevin equations,
//! used as an independent check on the Lyapunov steady state.
//!
//! For linear dynamics the classical SDE `df = K f dt + L dW` with
//! `L Lᵀ = N` has exactly the symmetrised quantum covariance as its
//! stationary covariance. The laboratory rates span six decades, so the
//! oracle runs on dimensionless "desk" systems with ω_m = 1.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{eigenvalues, stability_with_tolerance, DriftMatrix, DriftRates, NoiseMatrix};
use crate::error::{Error, Result};
use crate::model::PerCavity;
use crate::rng::derive_seed;
use crate::steady_state::{solve_lyapunov_dense, Vectorization};

/// dt·ρ(K) must stay below this for the explicit scheme.
pub const DT_GUARD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    /// Total simulated time per trajectory, including burn-in.
    pub t_total: f64,
    pub burn_in: f64,
    pub n_trajectories: usize,
    pub seed: u64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 0.005,
            t_total: 400.0,
            burn_in: 150.0,
            n_trajectories: 2000,
            seed: 2007,
        }
    }
}

/// Dimensionless two-cavity system specified directly by its rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeskSystem {
    pub omega_m: f64,
    pub kappa: f64,
    pub gamma_m: f64,
    pub nbar: f64,
    pub g_a: f64,
    pub g_b: f64,
    pub delta_a: f64,
    pub delta_b: f64,
}

impl Default for DeskSystem {
    fn default() -> Self {
        Self {
            omega_m: 1.0,
            kappa: 1.0,
            gamma_m: 0.05,
            nbar: 2.0,
            g_a: 0.8,
            g_b: 0.4,
            delta_a: 1.0,
            delta_b: -0.5,
        }
    }
}

impl DeskSystem {
    pub fn rates(&self) -> DriftRates {
        DriftRates {
            kappa: PerCavity::new(self.kappa, self.kappa),
            detuning: PerCavity::new(self.delta_a, self.delta_b),
            // Cavity b couples with the opposite sign.
            coupling: PerCavity::new(self.g_a, -self.g_b),
            omega_m: self.omega_m,
            gamma_m: self.gamma_m,
        }
    }

    pub fn drift(&self) -> DriftMatrix {
        self.rates().drift()
    }

    pub fn noise(&self) -> NoiseMatrix {
        self.rates().noise(self.nbar)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleEstimate {
    #[serde(with = "crate::serde_matrix")]
    pub covariance: DMatrix<f64>,
    /// Standard error from trajectory-level batch means.
    #[serde(with = "crate::serde_matrix")]
    pub stderr: DMatrix<f64>,
    pub n_trajectories: usize,
    pub steps_per_trajectory: usize,
}

/// Factor `L` with `L Lᵀ = N` for a positive semidefinite `N`; columns with
/// vanishing pivots are left at zero.
pub fn noise_factor(n: &DMatrix<f64>) -> DMatrix<f64> {
    let d = n.nrows();
    let mut l = DMatrix::<f64>::zeros(d, d);
    let tol = 1e-14 * n.amax().max(f64::MIN_POSITIVE);
    for j in 0..d {
        let pivot = n[(j, j)] - (0..j).map(|k| l[(j, k)].powi(2)).sum::<f64>();
        if pivot <= tol {
            continue;
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..d {
            let s = n[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
            l[(i, j)] = s / ljj;
        }
    }
    l
}

/// Stability margin, spectral radius, after rejecting unstable drifts.
fn checked_rates(k: &DMatrix<f64>) -> Result<(f64, f64)> {
    let report = stability_with_tolerance(k, 1e-9 * k.amax())?;
    if !report.stable {
        return Err(Error::UnstableSystem {
            max_real: -report.margin,
        });
    }
    let rho = eigenvalues(k)?
        .into_iter()
        .map(|(re, im)| re.hypot(im))
        .fold(0.0, f64::max);
    Ok((report.margin, rho))
}

fn check_guard(dt: f64, rho: f64) -> Result<()> {
    let product = dt * rho;
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter {
            field: "dt",
            reason: format!("must be > 0, got {dt}"),
        });
    }
    if product >= DT_GUARD {
        return Err(Error::UnstableScheme(product));
    }
    Ok(())
}

pub fn integrate_ensemble(
    k: &DMatrix<f64>,
    n: &DMatrix<f64>,
    cfg: &IntegratorConfig,
) -> Result<EnsembleEstimate> {
    let (margin, rho) = checked_rates(k)?;
    check_guard(cfg.dt, rho)?;
    if cfg.burn_in < 10.0 / margin {
        return Err(Error::InvalidParameter {
            field: "burn_in",
            reason: format!("must be >= 10/margin = {:.4e}", 10.0 / margin),
        });
    }
    if !(cfg.t_total > cfg.burn_in) || cfg.n_trajectories < 2 {
        return Err(Error::InvalidParameter {
            field: "t_total",
            reason: "need t_total > burn_in and at least 2 trajectories".into(),
        });
    }
    let d = k.nrows();
    let burn_steps = (cfg.burn_in / cfg.dt).round() as usize;
    let total_steps = (cfg.t_total / cfg.dt).round() as usize;
    let sample_steps = total_steps - burn_steps;
    let sqrt_dt = cfg.dt.sqrt();
    // Update as f ← A f + √dt L w with A = I + K dt.
    let a = DMatrix::<f64>::identity(d, d) + k * cfg.dt;
    let l = noise_factor(n) * sqrt_dt;

    let per_trajectory: Vec<DMatrix<f64>> = (0..cfg.n_trajectories)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, t as u64));
            let mut f = DVector::<f64>::zeros(d);
            let mut next = DVector::<f64>::zeros(d);
            let mut w = DVector::<f64>::zeros(d);
            let mut acc = DMatrix::<f64>::zeros(d, d);
            for step in 0..total_steps {
                for wi in w.iter_mut() {
                    *wi = StandardNormal.sample(&mut rng);
                }
                a.mul_to(&f, &mut next);
                next.gemv(1.0, &l, &w, 1.0);
                std::mem::swap(&mut f, &mut next);
                if step >= burn_steps {
                    acc.ger(1.0, &f, &f, 1.0);
                }
            }
            acc / sample_steps as f64
        })
        .collect();

    let nt = cfg.n_trajectories as f64;
    let mean = per_trajectory
        .iter()
        .fold(DMatrix::zeros(d, d), |s, m| s + m)
        / nt;
    let var = per_trajectory
        .iter()
        .fold(DMatrix::zeros(d, d), |s, m| {
            let dev = m - &mean;
            s + dev.component_mul(&dev)
        })
        / (nt - 1.0);
    let stderr = var.map(|v| (v / nt).sqrt());
    let covariance = (&mean + mean.transpose()) * 0.5;
    Ok(EnsembleEstimate {
        covariance,
        stderr,
        n_trajectories: cfg.n_trajectories,
        steps_per_trajectory: sample_steps,
    })
}

/// Exact stationary covariance of the Euler–Maruyama recursion,
/// `V_h = (I + K h) V_h (I + K h)ᵀ + N h`.
pub fn em_stationary_covariance(k: &DMatrix<f64>, n: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>> {
    let d = k.nrows();
    let a = DMatrix::<f64>::identity(d, d) + k * dt;
    let op = DMatrix::<f64>::identity(d * d, d * d) - a.kronecker(&a);
    let rhs = DVector::from_iterator(d * d, n.iter().map(|x| x * dt));
    let x = op.lu().solve(&rhs).ok_or(Error::SingularSystem { pivot_ratio: 0.0 })?;
    let v = DMatrix::from_column_slice(d, d, x.as_slice());
    Ok((&v + v.transpose()) * 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub dts: Vec<f64>,
    /// Relative Frobenius bias of the scheme's stationary covariance.
    pub biases: Vec<f64>,
    /// Least-squares slope of log(bias) against log(dt).
    pub order: f64,
}

/// Weak-order estimate of the steady covariance over the ladder h, h/2, h/4.
pub fn weak_convergence_check(k: &DMatrix<f64>, n: &DMatrix<f64>, h: f64) -> Result<ConvergenceReport> {
    let (_, rho) = checked_rates(k)?;
    check_guard(h, rho)?;
    let exact = solve_lyapunov_dense(k, n, Vectorization::ColumnMajor)?;
    let dts: Vec<f64> = vec![h, h / 2.0, h / 4.0];
    let biases = dts
        .iter()
        .map(|&dt| Ok((em_stationary_covariance(k, n, dt)? - &exact).norm() / exact.norm()))
        .collect::<Result<Vec<f64>>>()?;
    let xs: Vec<f64> = dts.iter().map(|x| x.ln()).collect();
    let ys: Vec<f64> = biases.iter().map(|x| x.ln()).collect();
    Ok(ConvergenceReport {
        order: slope(&xs, &ys),
        dts,
        biases,
    })
}

/// Ordinary least-squares slope.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_cfg() -> IntegratorConfig {
        IntegratorConfig {
            dt: 0.01,
            t_total: 60.0,
            burn_in: 20.0,
            n_trajectories: 200,
            seed: 3,
        }
    }

    #[test]
    fn decoupled_cavity_relaxes_to_vacuum() {
        let k = DMatrix::from_row_slice(2, 2, &[-1.0, 0.7, -0.7, -1.0]);
        let n = DMatrix::identity(2, 2);
        let est = integrate_ensemble(&k, &n, &small_cfg()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j { 0.5 } else { 0.0 };
                // Euler bias at dt = 0.01 is ~0.5%, well under 5 stderr here.
                let tol = 5.0 * est.stderr[(i, j)] + 0.01;
                assert!((est.covariance[(i, j)] - expected).abs() < tol);
            }
        }
    }

    #[test]
    fn decoupled_mirror_thermalises() {
        let nbar = 2.0;
        let gamma = 0.05;
        let k = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -gamma]);
        let n = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, gamma * (2.0 * nbar + 1.0)]);
        let cfg = IntegratorConfig {
            dt: 0.01,
            t_total: 1000.0,
            burn_in: 400.0,
            n_trajectories: 100,
            seed: 9,
        };
        let est = integrate_ensemble(&k, &n, &cfg).unwrap();
        // Explicit Euler erodes the damping of an oscillator by about dt, so
        // compare with the scheme's own stationary value.
        let exact = em_stationary_covariance(&k, &n, cfg.dt).unwrap();
        for i in 0..2 {
            let tol = 5.0 * est.stderr[(i, i)];
            assert!((est.covariance[(i, i)] - exact[(i, i)]).abs() < tol);
        }
        assert!((exact[(0, 0)] / (nbar + 0.5) - 1.0).abs() < 0.4);
    }

    #[test]
    fn noise_factor_skips_zero_rows() {
        let n = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0, 3.0]));
        let l = noise_factor(&n);
        assert_eq!(l.row(1).amax(), 0.0);
        assert!((&l * l.transpose() - &n).amax() < 1e-15);
    }

    #[test]
    fn scalar_ou_discrete_variance() {
        // x ← (1 − κh) x + σ√h w has variance σ²h / (1 − (1 − κh)²).
        let (kappa, sigma2, h) = (1.3, 0.8, 0.05);
        let k = DMatrix::from_element(1, 1, -kappa);
        let n = DMatrix::from_element(1, 1, sigma2);
        let v = em_stationary_covariance(&k, &n, h).unwrap()[(0, 0)];
        assert_relative_eq!(v, sigma2 * h / (1.0 - (1.0 - kappa * h).powi(2)), max_relative = 1e-12);
        let report = weak_convergence_check(&k, &n, h).unwrap();
        assert!((report.order - 1.0).abs() < 0.05);
    }

    #[test]
    fn guard_and_stability_errors() {
        let desk = DeskSystem::default();
        let (k, n) = (desk.drift().to_dmatrix(), desk.noise().to_dmatrix());
        let cfg = IntegratorConfig { dt: 0.5, ..small_cfg() };
        assert!(matches!(integrate_ensemble(&k, &n, &cfg), Err(Error::UnstableScheme(_))));
        assert!(matches!(weak_convergence_check(&k, &n, 0.5), Err(Error::UnstableScheme(_))));

        let unstable = DMatrix::from_row_slice(2, 2, &[0.1, 1.0, -1.0, 0.1]);
        assert!(matches!(
            integrate_ensemble(&unstable, &DMatrix::identity(2, 2), &small_cfg()),
            Err(Error::UnstableSystem { .. })
        ));
    }

    #[test]
    fn same_seed_same_stream() {
        let k = DMatrix::from_row_slice(2, 2, &[-1.0, 0.7, -0.7, -1.0]);
        let n = DMatrix::identity(2, 2);
        let cfg = IntegratorConfig { n_trajectories: 8, ..small_cfg() };
        let a = integrate_ensemble(&k, &n, &cfg).unwrap();
        let b = integrate_ensemble(&k, &n, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
