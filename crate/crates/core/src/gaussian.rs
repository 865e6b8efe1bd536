//! Gaussian-state entanglement tools: partial transposition, symplectic
//! spectra, logarithmic negativity and the tripartite NPT classification.
//!
//! Quadratures are normalised as `a = (x + i y)/√2`, so the vacuum has
//! variance 1/2 and a two-mode state is NPT iff its smallest partially
//! transposed symplectic eigenvalue is below 1/2.

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::dynamics::eigenvalues;
use crate::error::{Error, Result};
use crate::steady_state::CovarianceMatrix;

/// Tolerance on symplectic eigenvalues for physicality and NPT decisions.
pub const SYMPLECTIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    A,
    B,
    M,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::A, Mode::B, Mode::M];

    pub fn name(self) -> &'static str {
        match self {
            Mode::A => "a",
            Mode::B => "b",
            Mode::M => "m",
        }
    }
}

/// Block-diagonal symplectic form ⊕ [[0, 1], [−1, 0]] on `n` modes.
pub fn symplectic_form(n: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        s[(2 * k, 2 * k + 1)] = 1.0;
        s[(2 * k + 1, 2 * k)] = -1.0;
    }
    s
}

/// Submatrix for `modes`, in the order given.
pub fn reduced_cm(v: &CovarianceMatrix, modes: &[Mode]) -> Result<CovarianceMatrix> {
    let idx: Vec<usize> = modes
        .iter()
        .map(|&m| v.position(m).map(|p| [2 * p, 2 * p + 1]))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let n = idx.len();
    let entries = DMatrix::from_fn(n, n, |i, j| v.entries[(idx[i], idx[j])]);
    CovarianceMatrix::new(entries, modes.to_vec())
}

/// Flip the sign of `mode`'s momentum quadrature (time reversal on that mode).
pub fn partial_transpose(v: &CovarianceMatrix, mode: Mode) -> Result<CovarianceMatrix> {
    let y = 2 * v.position(mode)? + 1;
    let mut out = v.clone();
    let n = v.dim();
    for k in 0..n {
        if k != y {
            out.entries[(y, k)] = -out.entries[(y, k)];
            out.entries[(k, y)] = -out.entries[(k, y)];
        }
    }
    Ok(out)
}

/// Symplectic eigenvalues in ascending order, from the eigenvalues ±iν of ΣV.
pub fn symplectic_eigenvalues(v: &CovarianceMatrix) -> Result<Vec<f64>> {
    let n = v.modes.len();
    let sv = symplectic_form(n) * &v.entries;
    let mut moduli: Vec<f64> = eigenvalues(&sv)?
        .into_iter()
        .map(|(re, im)| re.hypot(im))
        .collect();
    moduli.sort_by(f64::total_cmp);
    Ok(moduli.chunks(2).map(|pair| 0.5 * (pair[0] + pair[1])).collect())
}

/// Two-mode symplectic spectrum `(n₋, n₊)` from local invariants.
///
/// With `pt` the spectrum of the partial transpose is returned, which only
/// changes the sign of det C in the seralian χ = det L_j + det L_k ± 2 det C.
pub fn symplectic_spectrum_2mode(v: &CovarianceMatrix, pt: bool) -> Result<(f64, f64)> {
    if v.modes.len() != 2 {
        return Err(Error::DegenerateInput(format!(
            "two-mode formula applied to {} modes",
            v.modes.len()
        )));
    }
    let e = &v.entries;
    let lj: Matrix2<f64> = e.fixed_view::<2, 2>(0, 0).clone_owned();
    let lk: Matrix2<f64> = e.fixed_view::<2, 2>(2, 2).clone_owned();
    let c: Matrix2<f64> = e.fixed_view::<2, 2>(0, 2).clone_owned();
    let sign = if pt { -1.0 } else { 1.0 };
    let chi = lj.determinant() + lk.determinant() + sign * 2.0 * c.determinant();
    let det_v = e.determinant();
    let disc = chi * chi - 4.0 * det_v;
    if disc < -SYMPLECTIC_TOL * (chi * chi).max(1.0) {
        return Err(Error::NegativeDiscriminant(disc));
    }
    let plus_sq = 0.5 * (chi + disc.max(0.0).sqrt());
    // n₋² = det V / n₊² avoids cancellation when n₋ ≪ n₊.
    let minus_sq = if plus_sq > 0.0 { det_v / plus_sq } else { 0.0 };
    Ok((minus_sq.max(0.0).sqrt(), plus_sq.sqrt()))
}

/// E_N = max(0, −ln 2n₋) of a two-mode covariance matrix.
pub fn log_negativity(v: &CovarianceMatrix) -> Result<f64> {
    let (nu, _) = symplectic_spectrum_2mode(v, true)?;
    Ok(log_negativity_from_nu(nu))
}

pub fn log_negativity_from_nu(nu_minus: f64) -> f64 {
    (-(2.0 * nu_minus).ln()).max(0.0)
}

/// Smallest symplectic eigenvalue ≥ 1/2 − tol.
pub fn check_physicality(v: &CovarianceMatrix) -> Result<bool> {
    Ok(symplectic_eigenvalues(v)?[0] >= 0.5 - SYMPLECTIC_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairResult {
    pub nu_minus: f64,
    pub log_neg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TripartiteNpt {
    /// PT on mode a, i.e. the a|bm cut.
    pub a_bm: bool,
    pub b_am: bool,
    pub m_ab: bool,
    /// Smallest symplectic eigenvalue after PT of a, b, m respectively.
    pub nu_min: [f64; 3],
    pub fully_inseparable: bool,
}

pub fn tripartite_npt(v: &CovarianceMatrix) -> Result<TripartiteNpt> {
    let mut flags = [false; 3];
    let mut nu_min = [0.0; 3];
    for (i, mode) in Mode::ALL.into_iter().enumerate() {
        let nu = symplectic_eigenvalues(&partial_transpose(v, mode)?)?[0];
        nu_min[i] = nu;
        flags[i] = nu < 0.5 - SYMPLECTIC_TOL;
    }
    Ok(TripartiteNpt {
        a_bm: flags[0],
        b_am: flags[1],
        m_ab: flags[2],
        nu_min,
        fully_inseparable: flags.iter().all(|&f| f),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntanglementReport {
    pub am: PairResult,
    pub bm: PairResult,
    pub ab: PairResult,
    pub tripartite: TripartiteNpt,
}

pub fn pair_result(v: &CovarianceMatrix, j: Mode, k: Mode) -> Result<PairResult> {
    let sub = reduced_cm(v, &[j, k])?;
    let (nu_minus, _) = symplectic_spectrum_2mode(&sub, true)?;
    Ok(PairResult {
        nu_minus,
        log_neg: log_negativity_from_nu(nu_minus),
    })
}

pub fn entanglement_report(v: &CovarianceMatrix) -> Result<EntanglementReport> {
    Ok(EntanglementReport {
        am: pair_result(v, Mode::A, Mode::M)?,
        bm: pair_result(v, Mode::B, Mode::M)?,
        ab: pair_result(v, Mode::A, Mode::B)?,
        tripartite: tripartite_npt(v)?,
    })
}

/// Two-mode squeezed vacuum with squeezing `r`, modes `(a, b)`.
pub fn two_mode_squeezed(r: f64, modes: [Mode; 2]) -> CovarianceMatrix {
    let c = (2.0 * r).cosh() / 2.0;
    let s = (2.0 * r).sinh() / 2.0;
    #[rustfmt::skip]
    let e = DMatrix::from_row_slice(4, 4, &[
        c, 0.0, s, 0.0,
        0.0, c, 0.0, -s,
        s, 0.0, c, 0.0,
        0.0, -s, 0.0, c,
    ]);
    CovarianceMatrix { entries: e, modes: modes.to_vec() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cm(e: DMatrix<f64>, modes: &[Mode]) -> CovarianceMatrix {
        CovarianceMatrix::new(e, modes.to_vec()).unwrap()
    }

    fn block_layout() -> CovarianceMatrix {
        let e = DMatrix::from_fn(6, 6, |i, j| {
            let (lo, hi) = (i.min(j), i.max(j));
            (10 * lo + hi) as f64 + if i == j { 100.0 } else { 0.0 }
        });
        CovarianceMatrix::tripartite(e).unwrap()
    }

    #[test]
    fn reduction_picks_blocks() {
        let v = block_layout();
        let am = reduced_cm(&v, &[Mode::A, Mode::M]).unwrap();
        let idx = [0, 1, 4, 5];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(am.entries[(i, j)], v.entries[(idx[i], idx[j])]);
            }
        }
        assert_eq!(reduced_cm(&v, &Mode::ALL).unwrap(), v);
        let m = reduced_cm(&v, &[Mode::M]).unwrap();
        assert_eq!(m.entries, v.entries.view((4, 4), (2, 2)).clone_owned());
        let ab = reduced_cm(&v, &[Mode::A, Mode::B]).unwrap();
        assert!(matches!(reduced_cm(&ab, &[Mode::M]), Err(Error::UnknownMode(Mode::M))));
    }

    #[test]
    fn transpose_is_involution_and_flips_momentum() {
        let v = block_layout();
        let pt = partial_transpose(&v, Mode::B).unwrap();
        assert_eq!(partial_transpose(&pt, Mode::B).unwrap(), v);
        assert_eq!(pt.entries[(3, 3)], v.entries[(3, 3)]);
        assert_eq!(pt.entries[(3, 1)], -v.entries[(3, 1)]);
        assert_eq!(pt.entries[(2, 1)], v.entries[(2, 1)]);

        let diag = cm(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0])), &[Mode::A, Mode::B]);
        assert_eq!(partial_transpose(&diag, Mode::A).unwrap(), diag);

        let tms = two_mode_squeezed(0.4, [Mode::A, Mode::B]);
        let t = partial_transpose(&tms, Mode::B).unwrap();
        assert_eq!(t.entries[(1, 3)], -tms.entries[(1, 3)]);
        assert_eq!(t.entries[(0, 2)], tms.entries[(0, 2)]);
    }

    #[test]
    fn vacuum_and_thermal_spectra() {
        let vac = cm(DMatrix::identity(6, 6) * 0.5, &Mode::ALL);
        for nu in symplectic_eigenvalues(&vac).unwrap() {
            assert_relative_eq!(nu, 0.5, epsilon = 1e-14);
        }
        let thermal = cm(DMatrix::identity(2, 2) * 3.5, &[Mode::M]);
        assert_relative_eq!(symplectic_eigenvalues(&thermal).unwrap()[0], 3.5, epsilon = 1e-13);
        let vac2 = cm(DMatrix::identity(4, 4) * 0.5, &[Mode::A, Mode::B]);
        let (lo, hi) = symplectic_spectrum_2mode(&vac2, true).unwrap();
        assert_relative_eq!(lo, 0.5, epsilon = 1e-15);
        assert_relative_eq!(hi, 0.5, epsilon = 1e-15);
        assert_eq!(log_negativity(&vac2).unwrap(), 0.0);
    }

    #[test]
    fn two_mode_squeezed_negativity() {
        let r = 0.15;
        let tms = two_mode_squeezed(r, [Mode::A, Mode::B]);
        let pt = partial_transpose(&tms, Mode::B).unwrap();
        assert_relative_eq!(
            symplectic_eigenvalues(&pt).unwrap()[0],
            (-2.0 * r).exp() / 2.0,
            epsilon = 1e-13
        );
        let (lo, _) = symplectic_spectrum_2mode(&tms, true).unwrap();
        assert_relative_eq!(lo, (-2.0 * r).exp() / 2.0, epsilon = 1e-14);
        assert_relative_eq!(log_negativity(&tms).unwrap(), 0.3, epsilon = 1e-13);
        // Unpartially-transposed state is pure.
        let (lo, hi) = symplectic_spectrum_2mode(&tms, false).unwrap();
        assert_relative_eq!(lo, 0.5, epsilon = 1e-12);
        assert_relative_eq!(hi, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn unphysical_matrix_has_negative_discriminant() {
        // Indefinite symmetric matrix whose ΣV has a complex eigenvalue pair.
        #[rustfmt::skip]
        let e = DMatrix::from_row_slice(4, 4, &[
            -0.1, -0.3, -0.1, 1.0,
            -0.3, 0.9, 0.1, 0.3,
            -0.1, 0.1, -0.9, -1.1,
            1.0, 0.3, -1.1, 0.1,
        ]);
        let r = symplectic_spectrum_2mode(&cm(e, &[Mode::A, Mode::B]), true);
        assert!(matches!(r, Err(Error::NegativeDiscriminant(_))));
    }

    #[test]
    fn tripartite_classification() {
        let thermal = cm(DMatrix::identity(6, 6) * 1.5, &Mode::ALL);
        let t = tripartite_npt(&thermal).unwrap();
        assert!(!t.a_bm && !t.b_am && !t.m_ab && !t.fully_inseparable);

        // Two-mode squeezed on (a, m), vacuum on b.
        let tms = two_mode_squeezed(0.5, [Mode::A, Mode::M]);
        let mut e = DMatrix::identity(6, 6) * 0.5;
        let map = [0, 1, 4, 5];
        for i in 0..4 {
            for j in 0..4 {
                e[(map[i], map[j])] = tms.entries[(i, j)];
            }
        }
        let t = tripartite_npt(&cm(e, &Mode::ALL)).unwrap();
        assert!(t.a_bm && t.m_ab && !t.b_am && !t.fully_inseparable);
    }

    #[test]
    fn physicality_check() {
        assert!(check_physicality(&two_mode_squeezed(1.0, [Mode::A, Mode::B])).unwrap());
        let sub_vacuum = cm(DMatrix::identity(2, 2) * 0.4, &[Mode::A]);
        assert!(!check_physicality(&sub_vacuum).unwrap());
    }
}
