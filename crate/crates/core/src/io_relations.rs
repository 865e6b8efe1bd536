//! Input–output mapping between intracavity and extracavity field
//! statistics, and a homodyne estimator for the output covariance matrix.
//!
//! With dimensionless output modes integrated over an acquisition window
//! `t_m`, `V_out = 2κ t_m V_ab + I/2`. Homodyne detection records one rotated
//! quadrature `x cos θ + y sin θ` per mode per shot; second moments over a
//! grid of phase settings determine the ten independent entries of `V_out`
//! by linear least squares.

use std::f64::consts::FRAC_PI_4;
use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::{check_physicality, symplectic_spectrum_2mode, Mode};
use crate::rng::derive_seed;
use crate::steady_state::{format_sig12, CovarianceMatrix};

/// Number of independent entries of a symmetric 4×4 matrix.
pub const N_PARAMS: usize = 10;

/// Index pairs `(i, j)` of the estimated entries, in parameter order.
pub const PARAM_INDEX: [(usize, usize); N_PARAMS] = [
    (0, 0),
    (0, 1),
    (1, 1),
    (2, 2),
    (2, 3),
    (3, 3),
    (0, 2),
    (0, 3),
    (1, 2),
    (1, 3),
];

pub fn output_cm(v_ab: &CovarianceMatrix, kappa: f64, t_m: f64) -> Result<CovarianceMatrix> {
    ensure_two_mode(v_ab)?;
    let gain = 2.0 * kappa * t_m;
    let entries = &v_ab.entries * gain + DMatrix::identity(4, 4) * 0.5;
    CovarianceMatrix::new(entries, v_ab.modes.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reconstruction {
    pub cm: CovarianceMatrix,
    /// False when the reconstructed matrix violates the uncertainty relation.
    pub physical: bool,
}

/// Invert [`output_cm`]: `V_ab = (V_out − I/2) / 2κ t_m`.
pub fn reconstruct_intracavity(
    v_out: &CovarianceMatrix,
    kappa: f64,
    t_m: f64,
) -> Result<Reconstruction> {
    ensure_two_mode(v_out)?;
    let gain = 2.0 * kappa * t_m;
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(Error::InvalidParameter {
            field: "t_m",
            reason: format!("kappa*t_m must be positive, got {}", kappa * t_m),
        });
    }
    let entries = (&v_out.entries - DMatrix::identity(4, 4) * 0.5) / gain;
    let cm = CovarianceMatrix::new(entries, v_out.modes.clone())?;
    let physical = check_physicality(&cm)?;
    Ok(Reconstruction { cm, physical })
}

fn ensure_two_mode(v: &CovarianceMatrix) -> Result<()> {
    if v.modes.len() == 2 {
        Ok(())
    } else {
        Err(Error::DegenerateInput(format!(
            "field-field matrix expected, got {} modes",
            v.modes.len()
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasurementConfig {
    pub t_m: f64,
    pub kappa: f64,
    /// `(θ_a, θ_b)` local-oscillator phases, radians.
    pub phase_grid: Vec<(f64, f64)>,
    pub samples_per_setting: usize,
    pub seed: u64,
}

impl MeasurementConfig {
    /// `t_m = 1/κ` on the {0, π/4, π/2}² phase grid.
    pub fn new(kappa: f64, samples_per_setting: usize, seed: u64) -> Self {
        Self {
            t_m: 1.0 / kappa,
            kappa,
            phase_grid: default_phase_grid(),
            samples_per_setting,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_m > 0.0 && self.t_m.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "t_m",
                reason: format!("must be > 0, got {}", self.t_m),
            });
        }
        if !(self.kappa > 0.0) {
            return Err(Error::InvalidParameter {
                field: "kappa",
                reason: format!("must be > 0, got {}", self.kappa),
            });
        }
        if self.samples_per_setting < 2 {
            return Err(Error::InvalidParameter {
                field: "samples_per_setting",
                reason: "at least 2 samples per setting".into(),
            });
        }
        if self.phase_grid.is_empty() {
            return Err(Error::IllPosedGrid { rank: 0 });
        }
        Ok(())
    }
}

pub fn default_phase_grid() -> Vec<(f64, f64)> {
    let phases = [0.0, FRAC_PI_4, FRAC_PI_2];
    phases
        .iter()
        .flat_map(|&a| phases.iter().map(move |&b| (a, b)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettingSamples {
    pub index: usize,
    pub theta_a: f64,
    pub theta_b: f64,
    pub xa: Vec<f64>,
    pub xb: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HomodyneRecord {
    pub settings: Vec<SettingSamples>,
}

pub const SAMPLE_CSV_HEADER: &str = "setting_index,theta_a,theta_b,xa,xb";

impl HomodyneRecord {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SAMPLE_CSV_HEADER);
        out.push('\n');
        for s in &self.settings {
            let ta = format_sig12(s.theta_a);
            let tb = format_sig12(s.theta_b);
            for (u, v) in s.xa.iter().zip(&s.xb) {
                out.push_str(&format!(
                    "{},{ta},{tb},{},{}\n",
                    s.index,
                    format_sig12(*u),
                    format_sig12(*v)
                ));
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == SAMPLE_CSV_HEADER => {}
            other => {
                return Err(Error::SampleFormat(format!(
                    "expected header `{SAMPLE_CSV_HEADER}`, got {other:?}"
                )))
            }
        }
        let mut settings: Vec<SettingSamples> = Vec::new();
        for (n, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != 5 {
                return Err(Error::SampleFormat(format!("line {}: expected 5 fields", n + 2)));
            }
            let index: usize = cells[0]
                .parse()
                .map_err(|e| Error::SampleFormat(format!("line {}: {e}", n + 2)))?;
            let num = |c: &str| {
                c.parse::<f64>()
                    .map_err(|e| Error::SampleFormat(format!("line {}: `{c}`: {e}", n + 2)))
            };
            let (ta, tb, xa, xb) = (num(cells[1])?, num(cells[2])?, num(cells[3])?, num(cells[4])?);
            let slot = match settings.iter_mut().position(|s| s.index == index) {
                Some(p) => &mut settings[p],
                None => {
                    settings.push(SettingSamples {
                        index,
                        theta_a: ta,
                        theta_b: tb,
                        xa: Vec::new(),
                        xb: Vec::new(),
                    });
                    settings.last_mut().unwrap()
                }
            };
            if slot.theta_a != ta || slot.theta_b != tb {
                return Err(Error::SampleFormat(format!(
                    "line {}: phases differ within setting {index}",
                    n + 2
                )));
            }
            slot.xa.push(xa);
            slot.xb.push(xb);
        }
        Ok(Self { settings })
    }
}

/// Covariance of the homodyne pair `(x_θa^a, x_θb^b)` implied by `V_out`.
pub fn setting_covariance(v_out: &DMatrix<f64>, theta_a: f64, theta_b: f64) -> [[f64; 2]; 2] {
    let ca = [theta_a.cos(), theta_a.sin()];
    let cb = [theta_b.cos(), theta_b.sin()];
    let quad = |u: &[f64; 2], off_r: usize, w: &[f64; 2], off_c: usize| {
        let mut s = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                s += u[i] * v_out[(off_r + i, off_c + j)] * w[j];
            }
        }
        s
    };
    let saa = quad(&ca, 0, &ca, 0);
    let sbb = quad(&cb, 2, &cb, 2);
    let sab = quad(&ca, 0, &cb, 2);
    [[saa, sab], [sab, sbb]]
}

/// Draw i.i.d. homodyne pairs for every phase setting.
///
/// Setting `i` uses its own generator seeded from `(seed, i)`, so the record
/// is reproducible and independent of thread scheduling.
pub fn simulate_homodyne(v_out: &CovarianceMatrix, config: &MeasurementConfig) -> Result<HomodyneRecord> {
    ensure_two_mode(v_out)?;
    config.validate()?;
    let settings = config
        .phase_grid
        .par_iter()
        .enumerate()
        .map(|(index, &(theta_a, theta_b))| {
            let s = setting_covariance(&v_out.entries, theta_a, theta_b);
            let l11 = s[0][0].max(0.0).sqrt();
            let l21 = if l11 > 0.0 { s[0][1] / l11 } else { 0.0 };
            let l22 = (s[1][1] - l21 * l21).max(0.0).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, index as u64));
            let m = config.samples_per_setting;
            let mut xa = Vec::with_capacity(m);
            let mut xb = Vec::with_capacity(m);
            for _ in 0..m {
                let w1: f64 = StandardNormal.sample(&mut rng);
                let w2: f64 = StandardNormal.sample(&mut rng);
                xa.push(l11 * w1);
                xb.push(l21 * w1 + l22 * w2);
            }
            SettingSamples {
                index,
                theta_a,
                theta_b,
                xa,
                xb,
            }
        })
        .collect();
    Ok(HomodyneRecord { settings })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatedCM {
    pub mean: CovarianceMatrix,
    /// Entrywise standard errors of `mean`.
    #[serde(with = "crate::serde_matrix")]
    pub stderr: DMatrix<f64>,
    /// Covariance of the ten estimated entries, `PARAM_INDEX` order.
    #[serde(with = "crate::serde_matrix")]
    pub param_covariance: DMatrix<f64>,
    /// Condition number of the normal equations AᵀA.
    pub normal_condition: f64,
}

fn design_rows(theta_a: f64, theta_b: f64) -> [[f64; N_PARAMS]; 3] {
    let (sa, ca) = theta_a.sin_cos();
    let (sb, cb) = theta_b.sin_cos();
    [
        [ca * ca, 2.0 * ca * sa, sa * sa, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, cb * cb, 2.0 * cb * sb, sb * sb, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, ca * cb, ca * sb, sa * cb, sa * sb],
    ]
}

pub fn params_to_matrix(beta: &[f64]) -> DMatrix<f64> {
    let mut v = DMatrix::zeros(4, 4);
    for (k, &(i, j)) in PARAM_INDEX.iter().enumerate() {
        v[(i, j)] = beta[k];
        v[(j, i)] = beta[k];
    }
    v
}

pub fn matrix_to_params(v: &DMatrix<f64>) -> [f64; N_PARAMS] {
    let mut beta = [0.0; N_PARAMS];
    for (k, &(i, j)) in PARAM_INDEX.iter().enumerate() {
        beta[k] = v[(i, j)];
    }
    beta
}

/// Least-squares inversion of per-setting second moments
/// `(⟨x_a²⟩, ⟨x_b²⟩, ⟨x_a x_b⟩)` with optional per-setting 3×3 moment
/// covariances for error propagation.
pub fn estimate_from_moments(
    phases: &[(f64, f64)],
    moments: &[[f64; 3]],
    moment_cov: Option<&[[[f64; 3]; 3]]>,
) -> Result<EstimatedCM> {
    let rows = 3 * phases.len();
    let mut a = DMatrix::zeros(rows, N_PARAMS);
    let mut m = DVector::zeros(rows);
    for (s, (&(ta, tb), mom)) in phases.iter().zip(moments).enumerate() {
        for (r, row) in design_rows(ta, tb).iter().enumerate() {
            for (c, &x) in row.iter().enumerate() {
                a[(3 * s + r, c)] = x;
            }
            m[3 * s + r] = mom[r];
        }
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-10 * smax)
        .count();
    if rank < N_PARAMS {
        return Err(Error::IllPosedGrid { rank });
    }
    let smin = svd.singular_values.min();
    let pinv = svd.pseudo_inverse(0.0).map_err(|e| Error::DegenerateInput(e.into()))?;
    let beta = &pinv * &m;
    let mut cov_m = DMatrix::zeros(rows, rows);
    if let Some(covs) = moment_cov {
        for (s, c) in covs.iter().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    cov_m[(3 * s + i, 3 * s + j)] = c[i][j];
                }
            }
        }
    }
    let param_covariance = &pinv * cov_m * pinv.transpose();
    let mut stderr = DMatrix::zeros(4, 4);
    for (k, &(i, j)) in PARAM_INDEX.iter().enumerate() {
        let se = param_covariance[(k, k)].max(0.0).sqrt();
        stderr[(i, j)] = se;
        stderr[(j, i)] = se;
    }
    Ok(EstimatedCM {
        mean: CovarianceMatrix::new(params_to_matrix(beta.as_slice()), vec![Mode::A, Mode::B])?,
        stderr,
        param_covariance,
        normal_condition: (smax / smin).powi(2),
    })
}

/// Estimate `V_out` from homodyne samples. Moments are raw (the mean is zero
/// by construction); their sampling covariance comes from the sample fourth
/// moments.
pub fn estimate_cm(record: &HomodyneRecord) -> Result<EstimatedCM> {
    let mut phases = Vec::with_capacity(record.settings.len());
    let mut moments = Vec::with_capacity(record.settings.len());
    let mut covs = Vec::with_capacity(record.settings.len());
    for s in &record.settings {
        let n = s.xa.len();
        if n < 2 || s.xb.len() != n {
            return Err(Error::SampleFormat(format!(
                "setting {} needs >= 2 paired samples",
                s.index
            )));
        }
        let z: Vec<[f64; 3]> = s
            .xa
            .iter()
            .zip(&s.xb)
            .map(|(&u, &v)| [u * u, v * v, u * v])
            .collect();
        let nf = n as f64;
        let mut mean = [0.0; 3];
        for zi in &z {
            for k in 0..3 {
                mean[k] += zi[k];
            }
        }
        mean.iter_mut().for_each(|x| *x /= nf);
        let mut cov = [[0.0; 3]; 3];
        for zi in &z {
            for i in 0..3 {
                for j in 0..3 {
                    cov[i][j] += (zi[i] - mean[i]) * (zi[j] - mean[j]);
                }
            }
        }
        // Covariance of the mean: sample covariance / n.
        for row in cov.iter_mut() {
            for c in row.iter_mut() {
                *c /= (nf - 1.0) * nf;
            }
        }
        phases.push((s.theta_a, s.theta_b));
        moments.push(mean);
        covs.push(cov);
    }
    estimate_from_moments(&phases, &moments, Some(&covs))
}

/// Output of the full estimation chain for one working point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineEstimate {
    pub v_out: EstimatedCM,
    pub v_ab: Reconstruction,
    #[serde(with = "crate::serde_matrix")]
    pub v_ab_stderr: DMatrix<f64>,
    pub log_neg: f64,
    /// Delta-method standard error of the unclipped −ln 2n₋.
    pub log_neg_stderr: f64,
}

/// Unclipped −ln(2n₋) of a field-field matrix given by its ten entries.
fn raw_log_negativity(beta: &[f64]) -> Result<f64> {
    let cm = CovarianceMatrix::new(params_to_matrix(beta), vec![Mode::A, Mode::B])?;
    let (nu, _) = symplectic_spectrum_2mode(&cm, true)?;
    Ok(-(2.0 * nu).ln())
}

/// Delta-method standard error of −ln 2n₋ under parameter covariance `cov`.
pub fn log_negativity_stderr(v: &CovarianceMatrix, cov: &DMatrix<f64>) -> Result<f64> {
    let beta = matrix_to_params(&v.entries);
    let mut grad = DVector::zeros(N_PARAMS);
    for k in 0..N_PARAMS {
        let h = 1e-6 * beta[k].abs().max(1e-3);
        let mut up = beta;
        let mut dn = beta;
        up[k] += h;
        dn[k] -= h;
        grad[k] = (raw_log_negativity(&up)? - raw_log_negativity(&dn)?) / (2.0 * h);
    }
    Ok((grad.transpose() * cov * &grad)[(0, 0)].max(0.0).sqrt())
}

/// Samples → `V̂_out` → `V̂_ab` → `Ê_N` with propagated uncertainties.
pub fn reconstruct_from_samples(
    record: &HomodyneRecord,
    kappa: f64,
    t_m: f64,
) -> Result<PipelineEstimate> {
    let v_out = estimate_cm(record)?;
    let v_ab = reconstruct_intracavity(&v_out.mean, kappa, t_m)?;
    let gain = 2.0 * kappa * t_m;
    let cov_ab = &v_out.param_covariance / (gain * gain);
    let v_ab_stderr = &v_out.stderr / gain;
    let (nu, _) = symplectic_spectrum_2mode(&v_ab.cm, true)?;
    let log_neg = crate::gaussian::log_negativity_from_nu(nu);
    let log_neg_stderr = log_negativity_stderr(&v_ab.cm, &cov_ab)?;
    Ok(PipelineEstimate {
        v_out,
        v_ab,
        v_ab_stderr,
        log_neg,
        log_neg_stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::two_mode_squeezed;
    use approx::assert_relative_eq;

    fn ab() -> Vec<Mode> {
        vec![Mode::A, Mode::B]
    }

    fn sample_cm() -> CovarianceMatrix {
        #[rustfmt::skip]
        let e = DMatrix::from_row_slice(4, 4, &[
            1.3, 0.2, 0.4, -0.1,
            0.2, 0.9, 0.05, -0.3,
            0.4, 0.05, 1.1, 0.15,
            -0.1, -0.3, 0.15, 1.2,
        ]);
        CovarianceMatrix::new(e, ab()).unwrap()
    }

    #[test]
    fn vacuum_scaling_and_short_window() {
        let vac = CovarianceMatrix::new(DMatrix::identity(4, 4) * 0.5, ab()).unwrap();
        let out = output_cm(&vac, 2.0, 0.25).unwrap();
        assert_eq!(out.entries, DMatrix::identity(4, 4));
        let out = output_cm(&sample_cm(), 1e8, 1e-20).unwrap();
        assert!((&out.entries - DMatrix::identity(4, 4) * 0.5).amax() < 1e-11);
    }

    #[test]
    fn window_of_one_over_kappa_doubles() {
        let kappa = 8.8e7;
        let v = sample_cm();
        let out = output_cm(&v, kappa, 1.0 / kappa).unwrap();
        let expected = &v.entries * 2.0 + DMatrix::identity(4, 4) * 0.5;
        assert!((&out.entries - expected).amax() < 1e-14);
    }

    #[test]
    fn reconstruction_inverts_output_map() {
        let v = two_mode_squeezed(0.3, [Mode::A, Mode::B]);
        for kt in [1e-3, 0.1, 1.0, 37.0, 1e3] {
            let out = output_cm(&v, 1.0, kt).unwrap();
            let back = reconstruct_intracavity(&out, 1.0, kt).unwrap();
            assert!((&back.cm.entries - &v.entries).amax() < 1e-12);
            assert!(back.physical);
        }
    }

    #[test]
    fn pure_input_noise_reconstructs_to_zero() {
        let out = CovarianceMatrix::new(DMatrix::identity(4, 4) * 0.5, ab()).unwrap();
        let r = reconstruct_intracavity(&out, 3.0, 0.5).unwrap();
        assert_eq!(r.cm.entries, DMatrix::zeros(4, 4));
        assert!(!r.physical);
        assert!(reconstruct_intracavity(&out, 3.0, 0.0).is_err());
    }

    #[test]
    fn noiseless_moments_invert_exactly() {
        let v = sample_cm();
        let grid = default_phase_grid();
        let moments: Vec<[f64; 3]> = grid
            .iter()
            .map(|&(a, b)| {
                let s = setting_covariance(&v.entries, a, b);
                [s[0][0], s[1][1], s[0][1]]
            })
            .collect();
        let est = estimate_from_moments(&grid, &moments, None).unwrap();
        assert!((&est.mean.entries - &v.entries).amax() < 1e-13);
        assert_eq!(est.stderr, DMatrix::zeros(4, 4));
        assert!(est.normal_condition.is_finite());
    }

    #[test]
    fn single_setting_is_ill_posed() {
        let r = estimate_from_moments(&[(0.0, 0.0)], &[[1.0, 1.0, 0.0]], None);
        assert!(matches!(r, Err(Error::IllPosedGrid { rank: 3 })));
    }

    #[test]
    fn vacuum_samples_have_half_variance() {
        let vac = CovarianceMatrix::new(DMatrix::identity(4, 4) * 0.5, ab()).unwrap();
        let mut cfg = MeasurementConfig::new(1.0, 40_000, 11);
        cfg.phase_grid = vec![(0.3, 1.7), (2.0, -0.4)];
        let rec = simulate_homodyne(&vac, &cfg).unwrap();
        for s in &rec.settings {
            let var = s.xa.iter().map(|x| x * x).sum::<f64>() / s.xa.len() as f64;
            assert_relative_eq!(var, 0.5, max_relative = 0.03);
        }
    }

    #[test]
    fn rotated_state_equals_shifted_phase() {
        // Rotating mode a by φ before measuring at θ equals measuring at θ+φ.
        let v = sample_cm();
        let phi = 0.7_f64;
        let (s, c) = phi.sin_cos();
        let mut r = DMatrix::identity(4, 4);
        r[(0, 0)] = c;
        r[(0, 1)] = -s;
        r[(1, 0)] = s;
        r[(1, 1)] = c;
        let rotated = r.transpose() * &v.entries * &r;
        let direct = setting_covariance(&rotated, 0.2, 1.1);
        let shifted = setting_covariance(&v.entries, 0.2 + phi, 1.1);
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(direct[i][j], shifted[i][j], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = MeasurementConfig::new(1.0, 100, 5);
        let a = simulate_homodyne(&sample_cm(), &cfg).unwrap();
        let b = simulate_homodyne(&sample_cm(), &cfg).unwrap();
        assert_eq!(a, b);
        let other = simulate_homodyne(&sample_cm(), &MeasurementConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let cfg = MeasurementConfig::new(1.0, 3, 1);
        let rec = simulate_homodyne(&sample_cm(), &cfg).unwrap();
        let text = rec.to_csv();
        let back = HomodyneRecord::from_csv(&text).unwrap();
        assert_eq!(back.settings.len(), rec.settings.len());
        assert_eq!(back.to_csv(), text);
        assert!(HomodyneRecord::from_csv("a,b\n").is_err());
        let bad = format!("{SAMPLE_CSV_HEADER}\n0,0,0,1.0\n");
        assert!(matches!(HomodyneRecord::from_csv(&bad), Err(Error::SampleFormat(_))));
    }

    #[test]
    fn config_validation() {
        let mut cfg = MeasurementConfig::new(2.0, 10, 0);
        assert_relative_eq!(cfg.t_m, 0.5);
        cfg.t_m = -1.0;
        assert!(cfg.validate().is_err());
        let cfg = MeasurementConfig::new(2.0, 1, 0);
        assert!(cfg.validate().is_err());
    }
}
