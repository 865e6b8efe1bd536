//! Stationary covariance matrix of the linearised dynamics.
//!
//! Solves `K V + V Kᵀ + N = 0` by vectorisation: with column-major `vec`,
//! `(I ⊗ K + K ⊗ I) vec(V) = −vec(N)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{stability_with_tolerance, DriftMatrix, NoiseMatrix, STABILITY_RTOL};
use crate::error::{Error, Result};
use crate::gaussian::Mode;

/// Symmetrised second moments of quadrature fluctuations, vacuum variance 1/2.
///
/// Rows and columns are ordered `(x, y)` per mode, modes in `modes` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceMatrix {
    #[serde(with = "crate::serde_matrix")]
    pub entries: DMatrix<f64>,
    pub modes: Vec<Mode>,
}

impl CovarianceMatrix {
    pub fn new(entries: DMatrix<f64>, modes: Vec<Mode>) -> Result<Self> {
        let n = 2 * modes.len();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::DegenerateInput(format!(
                "{}x{} matrix for {} modes",
                entries.nrows(),
                entries.ncols(),
                modes.len()
            )));
        }
        Ok(Self { entries, modes })
    }

    /// Full three-mode matrix in `(a, b, m)` order.
    pub fn tripartite(entries: DMatrix<f64>) -> Result<Self> {
        Self::new(entries, vec![Mode::A, Mode::B, Mode::M])
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn position(&self, mode: Mode) -> Result<usize> {
        self.modes
            .iter()
            .position(|&m| m == mode)
            .ok_or(Error::UnknownMode(mode))
    }

    /// 2×2 block between two modes (`L_j` when `row == col`, else `C_jk`).
    pub fn block(&self, row: Mode, col: Mode) -> Result<nalgebra::Matrix2<f64>> {
        let i = 2 * self.position(row)?;
        let j = 2 * self.position(col)?;
        Ok(self.entries.fixed_view::<2, 2>(i, j).clone_owned())
    }

    pub fn asymmetry(&self) -> f64 {
        (&self.entries - self.entries.transpose()).amax()
    }

    /// Row-major CSV, 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.entries.row_iter() {
            let cells: Vec<String> = row.iter().map(|&x| format_sig12(x)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, modes: Vec<Mode>) -> Result<Self> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .map(|c| {
                        c.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::DegenerateInput(format!("bad CSV cell `{c}`: {e}")))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DegenerateInput("CSV matrix is not square".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]), modes)
    }
}

/// Scientific notation with 12 significant digits.
pub fn format_sig12(x: f64) -> String {
    format!("{x:.11e}")
}

/// Residual ‖KV + VKᵀ + N‖_F / ‖N‖_F.
pub fn lyapunov_residual(k: &DMatrix<f64>, n: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    (k * v + v * k.transpose() + n).norm() / n.norm()
}

/// Ordering used to flatten V into the linear system's unknown vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Vectorization {
    ColumnMajor,
    RowMajor,
}

const SINGULAR_PIVOT_RATIO: f64 = 1e-14;

/// Solve the continuous Lyapunov equation for an arbitrary square drift.
pub fn solve_lyapunov_dense(
    k: &DMatrix<f64>,
    n: &DMatrix<f64>,
    ordering: Vectorization,
) -> Result<DMatrix<f64>> {
    let d = k.nrows();
    let id = DMatrix::<f64>::identity(d, d);
    let (vec_n, op) = match ordering {
        Vectorization::ColumnMajor => (
            DVector::from_iterator(d * d, n.iter().copied()),
            id.kronecker(k) + k.kronecker(&id),
        ),
        Vectorization::RowMajor => (
            DVector::from_iterator(d * d, n.transpose().iter().copied()),
            k.kronecker(&id) + id.kronecker(k),
        ),
    };
    let lu = op.clone().lu();
    let u = lu.u();
    let diag = u.diagonal().map(f64::abs);
    let pivot_ratio = diag.min() / diag.max();
    if !(pivot_ratio > SINGULAR_PIVOT_RATIO) {
        return Err(Error::SingularSystem { pivot_ratio });
    }
    let rhs = -vec_n;
    let mut x = lu
        .solve(&rhs)
        .ok_or(Error::SingularSystem { pivot_ratio })?;
    // One step of iterative refinement.
    let r = &rhs - &op * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let v = match ordering {
        Vectorization::ColumnMajor => DMatrix::from_column_slice(d, d, x.as_slice()),
        Vectorization::RowMajor => DMatrix::from_row_slice(d, d, x.as_slice()),
    };
    Ok((&v + v.transpose()) * 0.5)
}

/// Stationary three-mode covariance matrix of a stable drift.
pub fn solve_lyapunov(k: &DriftMatrix, n: &NoiseMatrix) -> Result<CovarianceMatrix> {
    let kd = k.to_dmatrix();
    let report = stability_with_tolerance(&kd, STABILITY_RTOL * k.omega_m().abs())?;
    if !report.stable {
        return Err(Error::UnstableSystem {
            max_real: -report.margin,
        });
    }
    let v = solve_lyapunov_dense(&kd, &n.to_dmatrix(), Vectorization::ColumnMajor)?;
    CovarianceMatrix::tripartite(v)
}
