//! Linearised fluctuation dynamics: drift kernel, diffusion matrix and
//! stability analysis.
//!
//! State ordering throughout is `(x_a, y_a, x_b, y_b, q, p)`.

use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::{DMatrix, Matrix6, Schur};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DerivedQuantities, PerCavity, SystemParams};

pub const DIM: usize = 6;

/// Relative stability tolerance: stable iff max Re λ < −10⁻⁹·ω_m.
pub const STABILITY_RTOL: f64 = 1e-9;

/// Slots of the drift kernel that can be non-zero, as (row, column).
pub const STRUCTURAL_NONZEROS: [(usize, usize); 15] = [
    (0, 0),
    (0, 1),
    (1, 0),
    (1, 1),
    (1, 4),
    (2, 2),
    (2, 3),
    (3, 2),
    (3, 3),
    (3, 4),
    (4, 5),
    (5, 0),
    (5, 2),
    (5, 4),
    (5, 5),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftMatrix(pub Matrix6<f64>);

impl DriftMatrix {
    pub fn matrix(&self) -> &Matrix6<f64> {
        &self.0
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_iterator(DIM, DIM, self.0.iter().copied())
    }

    pub fn omega_m(&self) -> f64 {
        self.0[(4, 5)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseMatrix(pub Matrix6<f64>);

impl NoiseMatrix {
    pub fn matrix(&self) -> &Matrix6<f64> {
        &self.0
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_iterator(DIM, DIM, self.0.iter().copied())
    }
}

/// Rates defining the drift and diffusion, independent of how they were derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftRates {
    pub kappa: PerCavity<f64>,
    pub detuning: PerCavity<f64>,
    /// Signed couplings (−1)^{δ_jb} G_j.
    pub coupling: PerCavity<f64>,
    pub omega_m: f64,
    pub gamma_m: f64,
}

impl DriftRates {
    pub fn from_params(d: &DerivedQuantities, params: &SystemParams) -> Self {
        let a = &params.cavity_a;
        let b = &params.cavity_b;
        Self {
            kappa: PerCavity::new(a.kappa, b.kappa),
            detuning: PerCavity::new(a.detuning, b.detuning),
            coupling: PerCavity::new(a.side_sign() * d.g_eff.a, b.side_sign() * d.g_eff.b),
            omega_m: params.mirror.omega_m,
            gamma_m: params.mirror.gamma_m,
        }
    }

    pub fn drift(&self) -> DriftMatrix {
        let (ka, kb) = (self.kappa.a, self.kappa.b);
        let (da, db) = (self.detuning.a, self.detuning.b);
        let (ga, gb) = (self.coupling.a, self.coupling.b);
        let mut k = Matrix6::zeros();
        k[(0, 0)] = -ka;
        k[(0, 1)] = da;
        k[(1, 0)] = -da;
        k[(1, 1)] = -ka;
        k[(1, 4)] = ga;
        k[(2, 2)] = -kb;
        k[(2, 3)] = db;
        k[(3, 2)] = -db;
        k[(3, 3)] = -kb;
        k[(3, 4)] = gb;
        k[(4, 5)] = self.omega_m;
        k[(5, 0)] = ga;
        k[(5, 2)] = gb;
        k[(5, 4)] = -self.omega_m;
        k[(5, 5)] = -self.gamma_m;
        DriftMatrix(k)
    }

    /// Diffusion diag(κ_a, κ_a, κ_b, κ_b, 0, γ_m(2n̄+1)).
    pub fn noise(&self, nbar: f64) -> NoiseMatrix {
        let (ka, kb) = (self.kappa.a, self.kappa.b);
        let brownian = self.gamma_m * (2.0 * nbar + 1.0);
        NoiseMatrix(Matrix6::from_diagonal(&nalgebra::Vector6::new(
            ka, ka, kb, kb, 0.0, brownian,
        )))
    }
}

pub fn build_drift(d: &DerivedQuantities, params: &SystemParams) -> DriftMatrix {
    DriftRates::from_params(d, params).drift()
}

pub fn build_noise(d: &DerivedQuantities, params: &SystemParams) -> NoiseMatrix {
    DriftRates::from_params(d, params).noise(d.nbar)
}

/// Minimal field interface for the Faddeev–LeVerrier recursion, so the same
/// code runs in floating point and in exact rational arithmetic.
pub trait PolyScalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn from_int(n: i64) -> Self;
}

impl PolyScalar for f64 {
    fn from_int(n: i64) -> Self {
        n as f64
    }
}

/// Coefficients of det(λI − A), ascending in powers of λ (last entry is 1).
pub fn faddeev_leverrier<T: PolyScalar>(a: &[Vec<T>]) -> Vec<T> {
    let n = a.len();
    let zero = T::from_int(0);
    let one = T::from_int(1);
    let mut coeffs = vec![zero; n + 1];
    coeffs[n] = one;
    // M_0 = 0; M_k = A M_{k-1} + c_{n-k+1} I; c_{n-k} = -tr(A M_k)/k
    let mut m = vec![vec![zero; n]; n];
    for k in 1..=n {
        let mut next = matmul(a, &m);
        for (i, row) in next.iter_mut().enumerate() {
            row[i] = row[i] + coeffs[n - k + 1];
        }
        m = next;
        let am = matmul(a, &m);
        let trace = (0..n).fold(zero, |acc, i| acc + am[i][i]);
        coeffs[n - k] = -(trace / T::from_int(k as i64));
    }
    coeffs
}

fn matmul<T: PolyScalar>(a: &[Vec<T>], b: &[Vec<T>]) -> Vec<Vec<T>> {
    let n = a.len();
    let zero = T::from_int(0);
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).fold(zero, |acc, k| acc + a[i][k] * b[k][j]))
                .collect()
        })
        .collect()
}

/// Characteristic polynomial coefficients of a square matrix, ascending.
pub fn characteristic_polynomial(k: &DMatrix<f64>) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = k.row_iter().map(|r| r.iter().copied().collect()).collect();
    faddeev_leverrier(&rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HurwitzResult {
    /// Leading principal minors Δ₁..Δₙ of the Hurwitz matrix.
    pub minors: Vec<f64>,
    pub coefficients_positive: bool,
    pub stable: bool,
}

/// Routh–Hurwitz test on a monic polynomial given with ascending coefficients.
pub fn routh_hurwitz(ascending: &[f64]) -> Result<HurwitzResult> {
    if ascending.iter().any(|c| c.is_nan()) {
        return Err(Error::DegenerateInput("NaN polynomial coefficient".into()));
    }
    let n = ascending.len().saturating_sub(1);
    if n == 0 {
        return Err(Error::DegenerateInput("constant polynomial".into()));
    }
    // a[0] is the leading coefficient.
    let a: Vec<f64> = ascending.iter().rev().copied().collect();
    let coeff = |k: isize| -> f64 {
        if k < 0 || k as usize > n {
            0.0
        } else {
            a[k as usize]
        }
    };
    let h = DMatrix::from_fn(n, n, |i, j| coeff(2 * j as isize - i as isize + 1));
    let minors: Vec<f64> = (1..=n)
        .map(|k| h.view((0, 0), (k, k)).clone_owned().determinant())
        .collect();
    let coefficients_positive = a.iter().all(|&c| c > 0.0);
    let stable = coefficients_positive && minors.iter().all(|&m| m > 0.0);
    Ok(HurwitzResult {
        minors,
        coefficients_positive,
        stable,
    })
}

/// Eigenvalues of a real square matrix as (re, im) pairs.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<(f64, f64)>> {
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000).ok_or(Error::EigenFailure)?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    /// Rate used to make the polynomial dimensionless (max |K_ij|).
    pub scale: f64,
    /// Ascending coefficients of det(λI − K/scale).
    pub char_poly: Vec<f64>,
    /// Hurwitz leading principal minors of `char_poly`.
    pub hurwitz_minors: Vec<f64>,
    pub hurwitz_stable: bool,
    /// Real parts of the eigenvalues of K, sorted descending.
    pub eigen_margins: Vec<f64>,
    /// −max Re λ.
    pub margin: f64,
    pub stable: bool,
}

impl StabilityReport {
    /// Penultimate Hurwitz minor; its sign change marks oscillatory instability.
    pub fn c1(&self) -> f64 {
        self.hurwitz_minors[self.hurwitz_minors.len() - 2]
    }

    /// Last Hurwitz minor (= c₀·Δₙ₋₁); its sign change marks static instability.
    pub fn c2(&self) -> f64 {
        self.hurwitz_minors[self.hurwitz_minors.len() - 1]
    }
}

/// Combined eigenvalue / Routh–Hurwitz analysis with explicit tolerance.
/// The eigenvalue verdict (`max Re λ < −tol`) is authoritative.
pub fn stability_with_tolerance(k: &DMatrix<f64>, tol: f64) -> Result<StabilityReport> {
    if k.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateInput("non-finite drift entry".into()));
    }
    let scale = k.amax();
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let char_poly = characteristic_polynomial(&(k / scale));
    let hurwitz = routh_hurwitz(&char_poly)?;
    let mut eigen_margins: Vec<f64> = eigenvalues(k)?.into_iter().map(|(re, _)| re).collect();
    eigen_margins.sort_by(|x, y| y.total_cmp(x));
    let margin = -eigen_margins[0];
    Ok(StabilityReport {
        scale,
        char_poly,
        hurwitz_minors: hurwitz.minors,
        hurwitz_stable: hurwitz.stable,
        eigen_margins,
        margin,
        stable: margin > tol,
    })
}

pub fn stability(k: &DriftMatrix) -> Result<StabilityReport> {
    stability_with_tolerance(&k.to_dmatrix(), STABILITY_RTOL * k.omega_m().abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive, CavityLabel};
    use approx::assert_relative_eq;
    use num_rational::Ratio;

    #[derive(Clone, Copy, Debug, PartialEq)]
    struct Q(Ratio<i128>);

    impl Add for Q {
        type Output = Q;
        fn add(self, o: Q) -> Q {
            Q(self.0 + o.0)
        }
    }
    impl Sub for Q {
        type Output = Q;
        fn sub(self, o: Q) -> Q {
            Q(self.0 - o.0)
        }
    }
    impl Mul for Q {
        type Output = Q;
        fn mul(self, o: Q) -> Q {
            Q(self.0 * o.0)
        }
    }
    impl Div for Q {
        type Output = Q;
        fn div(self, o: Q) -> Q {
            Q(self.0 / o.0)
        }
    }
    impl Neg for Q {
        type Output = Q;
        fn neg(self) -> Q {
            Q(-self.0)
        }
    }
    impl PolyScalar for Q {
        fn from_int(n: i64) -> Self {
            Q(Ratio::from_integer(n as i128))
        }
    }

    /// Laplace expansion along the first row.
    fn cofactor_det(m: &[Vec<i128>]) -> i128 {
        let n = m.len();
        if n == 1 {
            return m[0][0];
        }
        (0..n)
            .map(|j| {
                let minor: Vec<Vec<i128>> = m[1..]
                    .iter()
                    .map(|r| {
                        r.iter()
                            .enumerate()
                            .filter(|&(c, _)| c != j)
                            .map(|(_, &v)| v)
                            .collect()
                    })
                    .collect();
                let sign = if j % 2 == 0 { 1 } else { -1 };
                sign * m[0][j] * cofactor_det(&minor)
            })
            .sum()
    }

    fn lcg(state: &mut u64) -> i64 {
        *state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((*state >> 33) % 11) as i64 - 5
    }

    #[test]
    fn exact_polynomial_matches_cofactor_expansion() {
        let mut s = 7u64;
        for _ in 0..20 {
            let a: Vec<Vec<i64>> = (0..6).map(|_| (0..6).map(|_| lcg(&mut s)).collect()).collect();
            let aq: Vec<Vec<Q>> = a
                .iter()
                .map(|r| r.iter().map(|&v| Q::from_int(v)).collect())
                .collect();
            let coeffs = faddeev_leverrier(&aq);
            // p(λ) = det(λI − A) checked at seven integer nodes pins all 7 coefficients.
            for lambda in -3i128..=3 {
                let shifted: Vec<Vec<i128>> = (0..6)
                    .map(|i| {
                        (0..6)
                            .map(|j| (if i == j { lambda } else { 0 }) - a[i][j] as i128)
                            .collect()
                    })
                    .collect();
                let direct = cofactor_det(&shifted);
                let l = Ratio::from_integer(lambda);
                let poly = coeffs
                    .iter()
                    .rev()
                    .fold(Ratio::from_integer(0), |acc, c| acc * l + c.0);
                assert_eq!(poly, Ratio::from_integer(direct));
            }
        }
    }

    #[test]
    fn minus_identity_gives_binomial_coefficients() {
        let c = characteristic_polynomial(&(-DMatrix::<f64>::identity(6, 6)));
        assert_eq!(c, vec![1.0, 6.0, 15.0, 20.0, 15.0, 6.0, 1.0]);
    }

    #[test]
    fn embedded_companion_block() {
        // [[0,1],[-2,-3]] ⊕ -I₄: (λ²+3λ+2)(λ+1)⁴ = (λ+1)⁵(λ+2)
        let mut k = -DMatrix::<f64>::identity(6, 6);
        k[(0, 0)] = 0.0;
        k[(0, 1)] = 1.0;
        k[(1, 0)] = -2.0;
        k[(1, 1)] = -3.0;
        let c = characteristic_polynomial(&k);
        // (λ+1)^5 (λ+2): 2, 11, 25, 30, 20, 7, 1
        let expected = [2.0, 11.0, 25.0, 30.0, 20.0, 7.0, 1.0];
        for (x, y) in c.iter().zip(expected) {
            assert_relative_eq!(*x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn hurwitz_on_stable_and_flipped_polynomials() {
        let stable = [1.0, 6.0, 15.0, 20.0, 15.0, 6.0, 1.0];
        let r = routh_hurwitz(&stable).unwrap();
        assert!(r.stable);
        assert!(r.minors.iter().all(|&m| m > 0.0));
        let mut flipped = stable;
        flipped[3] = -20.0;
        assert!(!routh_hurwitz(&flipped).unwrap().stable);
        let mut nan = stable;
        nan[2] = f64::NAN;
        assert!(matches!(routh_hurwitz(&nan), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn drift_has_printed_layout() {
        let p = SystemParams::reference()
            .with_power(CavityLabel::B, 10e-3)
            .with_detuning(CavityLabel::B, -2e7);
        let d = derive(&p);
        let k = build_drift(&d, &p).0;
        for i in 0..6 {
            for j in 0..6 {
                let structural = STRUCTURAL_NONZEROS.contains(&(i, j));
                assert_eq!(k[(i, j)] != 0.0, structural, "slot ({i},{j})");
            }
        }
        assert_eq!(k[(4, 5)], p.mirror.omega_m);
        assert_eq!(k[(5, 4)], -p.mirror.omega_m);
        assert_eq!(k[(5, 5)], -p.mirror.gamma_m);
        assert_eq!(k[(5, 0)], d.g_eff.a);
        assert_eq!(k[(1, 4)], d.g_eff.a);
        assert_eq!(k[(5, 2)], -d.g_eff.b);
        assert_eq!(k[(3, 4)], -d.g_eff.b);
    }

    #[test]
    fn zero_coupling_is_block_diagonal_and_stable() {
        let mut p = SystemParams::reference();
        p.mirror.mass = f64::MAX;
        let d = derive(&p);
        let k = build_drift(&d, &p);
        for (i, j) in [(1, 4), (3, 4), (5, 0), (5, 2)] {
            assert_eq!(k.0[(i, j)], 0.0);
        }
        assert!(stability(&k).unwrap().stable);
    }

    #[test]
    fn coupling_entry_at_caption_parameters() {
        // G_a = √2 · 2.6987e4 · 1346.93 = 5.1407e7 rad/s
        let p = SystemParams::reference_kappa_over_2pi();
        let k = build_drift(&derive(&p), &p);
        assert_relative_eq!(k.0[(1, 4)], 5.1407e7, max_relative = 1e-4);
    }

    #[test]
    fn noise_diagonal() {
        let p = SystemParams::reference();
        let d = derive(&p);
        let n = build_noise(&d, &p).0;
        let two_pi = std::f64::consts::TAU;
        assert_relative_eq!(n[(5, 5)], two_pi * 100.0 * (2.0 * 832.965 + 1.0), max_relative = 1e-5);
        assert_eq!(n[(4, 4)], 0.0);
        for i in 0..4 {
            assert_eq!(n[(i, i)], 8.8e7);
        }
        assert_eq!(n.iter().filter(|&&x| x != 0.0).count(), 5);

        let mut cold = p.clone();
        cold.mirror.temperature = 0.0;
        assert_eq!(build_noise(&derive(&cold), &cold).0[(5, 5)], cold.mirror.gamma_m);
    }

    #[test]
    fn undamped_oscillator_is_marginal_and_unstable() {
        let mut p = SystemParams::reference();
        p.mirror.mass = f64::MAX;
        let mut k = build_drift(&derive(&p), &p);
        k.0[(5, 5)] = 0.0;
        let r = stability(&k).unwrap();
        assert!(r.margin.abs() < 1e-6 * p.mirror.omega_m);
        assert!(!r.stable);
    }

    #[test]
    fn coefficient_identities() {
        let p = SystemParams::reference()
            .with_power(CavityLabel::B, 20e-3)
            .with_detuning(CavityLabel::B, -4e7);
        let k = build_drift(&derive(&p), &p).to_dmatrix();
        let c = characteristic_polynomial(&k);
        assert_eq!(c[6], 1.0);
        assert_relative_eq!(c[5], -k.trace(), max_relative = 1e-10);
        assert_relative_eq!(c[0], k.determinant(), max_relative = 1e-10);
    }
}
