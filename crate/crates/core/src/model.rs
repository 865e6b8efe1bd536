//! Physical parameters of the two-cavity, one-mirror system and the
//! operating-point quantities derived from them.
//!
//! All frequencies and rates are angular (rad/s). The intracavity amplitudes
//! `alpha_s` are taken real and non-negative; the drive phase is absorbed into
//! the field quadrature reference.

use serde::{Deserialize, Serialize};

use crate::dynamics::{build_drift, stability};
use crate::error::{Error, Result};

/// Fundamental constants in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub k_b: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            hbar: 1.054_571_817e-34,
            k_b: 1.380_649e-23,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CavityLabel {
    A,
    B,
}

impl CavityLabel {
    /// `(-1)^{δ_jb}`: +1 for cavity A, -1 for cavity B, which sits on the
    /// opposite face of the mirror.
    pub fn side_sign(self) -> f64 {
        match self {
            CavityLabel::A => 1.0,
            CavityLabel::B => -1.0,
        }
    }
}

/// A pair of values, one per cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerCavity<T> {
    pub a: T,
    pub b: T,
}

impl<T: Copy> PerCavity<T> {
    pub fn new(a: T, b: T) -> Self {
        Self { a, b }
    }

    pub fn get(&self, label: CavityLabel) -> T {
        match label {
            CavityLabel::A => self.a,
            CavityLabel::B => self.b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    pub label: CavityLabel,
    /// Drive laser frequency ω_l.
    pub omega_laser: f64,
    /// Cavity resonance ω_c; locked close to the laser.
    pub omega_cavity: f64,
    /// Cavity length in metres.
    pub length: f64,
    /// Amplitude decay rate κ.
    pub kappa: f64,
    /// Input power in watts.
    pub power: f64,
    /// Effective (radiation-pressure shifted) detuning Δ.
    pub detuning: f64,
}

impl CavityParams {
    pub fn side_sign(&self) -> f64 {
        self.label.side_sign()
    }

    fn validate(&self) -> Result<()> {
        positive("kappa", self.kappa)?;
        positive("length", self.length)?;
        positive("omega_laser", self.omega_laser)?;
        positive("omega_cavity", self.omega_cavity)?;
        if !(self.power >= 0.0 && self.power.is_finite()) {
            return Err(invalid("power", format!("must be >= 0, got {}", self.power)));
        }
        if !self.detuning.is_finite() {
            return Err(invalid("detuning", "must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirrorParams {
    pub omega_m: f64,
    pub gamma_m: f64,
    /// Effective mass in kg.
    pub mass: f64,
    /// Bath temperature in kelvin.
    pub temperature: f64,
}

impl MirrorParams {
    fn validate(&self) -> Result<()> {
        positive("omega_m", self.omega_m)?;
        positive("gamma_m", self.gamma_m)?;
        positive("mass", self.mass)?;
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(invalid(
                "temperature",
                format!("must be >= 0, got {}", self.temperature),
            ));
        }
        Ok(())
    }
}

/// Non-fatal conditions under which the model's assumptions weaken.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ValidityWarning {
    /// γ_m/ω_m exceeds 10⁻²; the Markovian Brownian-noise limit is questionable.
    WeakMarkovLimit { ratio: f64 },
}

impl std::fmt::Display for ValidityWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ValidityWarning::WeakMarkovLimit { ratio } => write!(
                f,
                "gamma_m/omega_m = {ratio:.3e} > 1e-2: Markovian mirror noise is a poor approximation"
            ),
        }
    }
}

pub const MARKOV_RATIO_LIMIT: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub cavity_a: CavityParams,
    pub cavity_b: CavityParams,
    pub mirror: MirrorParams,
    pub constants: PhysicalConstants,
}

impl SystemParams {
    pub fn new(
        cavity_a: CavityParams,
        cavity_b: CavityParams,
        mirror: MirrorParams,
        constants: PhysicalConstants,
    ) -> Result<Self> {
        let params = Self {
            cavity_a,
            cavity_b,
            mirror,
            constants,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cavity_a.label != CavityLabel::A {
            return Err(invalid("cavity_a.label", "must be A".into()));
        }
        if self.cavity_b.label != CavityLabel::B {
            return Err(invalid("cavity_b.label", "must be B".into()));
        }
        self.cavity_a.validate()?;
        self.cavity_b.validate()?;
        self.mirror.validate()?;
        positive("hbar", self.constants.hbar)?;
        positive("k_b", self.constants.k_b)?;
        Ok(())
    }

    pub fn warnings(&self) -> Vec<ValidityWarning> {
        let ratio = self.mirror.gamma_m / self.mirror.omega_m;
        let mut out = Vec::new();
        if ratio > MARKOV_RATIO_LIMIT {
            out.push(ValidityWarning::WeakMarkovLimit { ratio });
        }
        out
    }

    /// Reference working point: 10 MHz mirror of 5 ng with Q = 10⁵ at 0.4 K,
    /// 1 mm cavities driven at 810 nm with 50 mW into cavity A, Δ_a = ω_m,
    /// cavity B undriven and resonant.
    ///
    /// The decay rate is κ = 8.8×10⁷ s⁻¹. Reading the tabulated 8.8×10⁷ as
    /// κ/2π instead puts the system deep in the bad-cavity regime where the
    /// field-mirror negativity is four orders of magnitude below the
    /// reported ~0.3; see [`SystemParams::reference_kappa_over_2pi`].
    pub fn reference() -> Self {
        let two_pi = std::f64::consts::TAU;
        let omega_m = two_pi * 1e7;
        let omega_laser = two_pi * 3.7e14;
        let kappa = 8.8e7;
        let cavity = |label, power, detuning| CavityParams {
            label,
            omega_laser,
            omega_cavity: omega_laser,
            length: 1e-3,
            kappa,
            power,
            detuning,
        };
        Self {
            cavity_a: cavity(CavityLabel::A, 50e-3, omega_m),
            cavity_b: cavity(CavityLabel::B, 0.0, 0.0),
            mirror: MirrorParams {
                omega_m,
                gamma_m: two_pi * 100.0,
                mass: 5e-12,
                temperature: 0.4,
            },
            constants: PhysicalConstants::default(),
        }
    }

    /// Same as [`SystemParams::reference`] with κ = 2π·8.8×10⁷ rad/s.
    pub fn reference_kappa_over_2pi() -> Self {
        let kappa = std::f64::consts::TAU * 8.8e7;
        let mut p = Self::reference();
        p.cavity_a.kappa = kappa;
        p.cavity_b.kappa = kappa;
        p
    }

    pub fn cavity(&self, label: CavityLabel) -> &CavityParams {
        match label {
            CavityLabel::A => &self.cavity_a,
            CavityLabel::B => &self.cavity_b,
        }
    }

    pub fn cavity_mut(&mut self, label: CavityLabel) -> &mut CavityParams {
        match label {
            CavityLabel::A => &mut self.cavity_a,
            CavityLabel::B => &mut self.cavity_b,
        }
    }

    pub fn with_detuning(&self, label: CavityLabel, detuning: f64) -> Self {
        let mut p = self.clone();
        p.cavity_mut(label).detuning = detuning;
        p
    }

    pub fn with_power(&self, label: CavityLabel, power: f64) -> Self {
        let mut p = self.clone();
        p.cavity_mut(label).power = power;
        p
    }
}

/// Operating-point quantities entering the linearised dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantities {
    /// Single-photon optomechanical coupling G₀ⱼ.
    pub g0: PerCavity<f64>,
    /// Drive amplitude |Eⱼ|.
    pub drive_amp: PerCavity<f64>,
    /// Stationary intracavity amplitude α_{s,j}.
    pub alpha_s: PerCavity<f64>,
    /// Effective coupling Gⱼ = √2 α_{s,j} G₀ⱼ.
    pub g_eff: PerCavity<f64>,
    /// Thermal occupation of the mirror mode.
    pub nbar: f64,
    /// Static mirror displacement (signed, dimensionless).
    pub q_s: f64,
}

pub fn coupling_rate(cavity: &CavityParams, mirror: &MirrorParams, c: &PhysicalConstants) -> f64 {
    (cavity.omega_cavity / cavity.length) * (c.hbar / (mirror.mass * mirror.omega_m)).sqrt()
}

pub fn drive_amplitude(cavity: &CavityParams, c: &PhysicalConstants) -> f64 {
    (2.0 * cavity.kappa * cavity.power / (c.hbar * cavity.omega_laser)).sqrt()
}

/// Bose occupation at the mirror frequency; exactly zero at T = 0.
pub fn thermal_occupation(mirror: &MirrorParams, c: &PhysicalConstants) -> f64 {
    if mirror.temperature == 0.0 {
        return 0.0;
    }
    let x = c.hbar * mirror.omega_m / (c.k_b * mirror.temperature);
    1.0 / x.exp_m1()
}

/// Derive couplings, amplitudes, thermal occupation and mirror displacement
/// from validated parameters at the stored effective detunings.
pub fn derive(params: &SystemParams) -> DerivedQuantities {
    let c = &params.constants;
    let m = &params.mirror;
    let per = |cav: &CavityParams| {
        let g0 = coupling_rate(cav, m, c);
        let e = drive_amplitude(cav, c);
        let alpha = e / cav.kappa.hypot(cav.detuning);
        (g0, e, alpha, std::f64::consts::SQRT_2 * alpha * g0)
    };
    let (g0a, ea, aa, ga) = per(&params.cavity_a);
    let (g0b, eb, ab, gb) = per(&params.cavity_b);
    let q_s = (params.cavity_a.side_sign() * g0a * aa * aa
        + params.cavity_b.side_sign() * g0b * ab * ab)
        / m.omega_m;
    DerivedQuantities {
        g0: PerCavity::new(g0a, g0b),
        drive_amp: PerCavity::new(ea, eb),
        alpha_s: PerCavity::new(aa, ab),
        g_eff: PerCavity::new(ga, gb),
        nbar: thermal_occupation(m, c),
        q_s,
    }
}

/// A self-consistent static solution for given nominal detunings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatingPoint {
    pub detuning: PerCavity<f64>,
    pub alpha_s: PerCavity<f64>,
    pub q_s: f64,
    pub stable: bool,
}

/// Residual of the mirror displacement fixed-point condition, and its derivative.
struct DisplacementEquation {
    side: [f64; 2],
    g0: [f64; 2],
    e2: [f64; 2],
    kappa: [f64; 2],
    nominal: [f64; 2],
    omega_m: f64,
}

impl DisplacementEquation {
    fn new(params: &SystemParams, nominal: PerCavity<f64>) -> Self {
        let c = &params.constants;
        let m = &params.mirror;
        let a = &params.cavity_a;
        let b = &params.cavity_b;
        Self {
            side: [a.side_sign(), b.side_sign()],
            g0: [coupling_rate(a, m, c), coupling_rate(b, m, c)],
            e2: [drive_amplitude(a, c).powi(2), drive_amplitude(b, c).powi(2)],
            kappa: [a.kappa, b.kappa],
            nominal: [nominal.a, nominal.b],
            omega_m: m.omega_m,
        }
    }

    fn detuning(&self, j: usize, q: f64) -> f64 {
        self.nominal[j] - self.side[j] * self.g0[j] * q
    }

    fn alpha(&self, j: usize, q: f64) -> f64 {
        (self.e2[j] / (self.kappa[j].powi(2) + self.detuning(j, q).powi(2))).sqrt()
    }

    fn pressure(&self, q: f64) -> f64 {
        (0..2)
            .map(|j| {
                self.side[j] * self.g0[j] * self.e2[j]
                    / (self.kappa[j].powi(2) + self.detuning(j, q).powi(2))
            })
            .sum::<f64>()
            / self.omega_m
    }

    fn residual(&self, q: f64) -> f64 {
        q - self.pressure(q)
    }

    fn slope(&self, q: f64) -> f64 {
        let s: f64 = (0..2)
            .map(|j| {
                let d = self.detuning(j, q);
                let den = self.kappa[j].powi(2) + d * d;
                2.0 * self.g0[j].powi(2) * self.e2[j] * d / (den * den)
            })
            .sum();
        1.0 - s / self.omega_m
    }

    /// Bound on |q_s| over all detunings.
    fn q_bound(&self) -> f64 {
        (0..2)
            .map(|j| self.g0[j] * self.e2[j] / self.kappa[j].powi(2))
            .sum::<f64>()
            / self.omega_m
    }

    /// Scale defining relative residuals.
    fn scale(&self, q: f64) -> f64 {
        q.abs().max(self.pressure(q).abs()).max(f64::MIN_POSITIVE)
    }
}

const NEWTON_SEEDS: usize = 2000;
const NEWTON_MAX_ITER: usize = 200;
const DEDUP_RTOL: f64 = 1e-9;

fn damped_newton(eq: &DisplacementEquation, seed: f64) -> Option<f64> {
    let mut q = seed;
    let mut f = eq.residual(q);
    for _ in 0..NEWTON_MAX_ITER {
        if f.abs() <= 1e-13 * eq.scale(q) {
            return Some(q);
        }
        let d = eq.slope(q);
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let step = -f / d;
        let mut lambda = 1.0;
        loop {
            let trial = q + lambda * step;
            let ft = eq.residual(trial);
            if ft.abs() < f.abs() {
                q = trial;
                f = ft;
                break;
            }
            lambda *= 0.5;
            if lambda < 1e-12 {
                // Stalled; accept only if already converged to rounding.
                return (f.abs() <= 1e-10 * eq.scale(q)).then_some(q);
            }
        }
    }
    (f.abs() <= 1e-10 * eq.scale(q)).then_some(q)
}

/// Solve the coupled static conditions Δⱼ = Δ₀ⱼ − sⱼG₀ⱼq_s,
/// α_{s,j} = |Eⱼ|/√(κⱼ²+Δⱼ²), q_s = Σ sⱼG₀ⱼα_{s,j}²/ω_m for every real root.
///
/// Roots are sorted by q_s and each carries the stability verdict of the
/// linearised dynamics around it.
pub fn solve_operating_point(
    params: &SystemParams,
    nominal: PerCavity<f64>,
) -> Result<Vec<OperatingPoint>> {
    params.validate()?;
    let eq = DisplacementEquation::new(params, nominal);
    let bound = eq.q_bound();
    let mut roots: Vec<f64> = if bound == 0.0 {
        vec![0.0]
    } else {
        let lo = -1.05 * bound;
        let hi = 1.05 * bound;
        (0..NEWTON_SEEDS)
            .filter_map(|i| {
                let seed = lo + (hi - lo) * i as f64 / (NEWTON_SEEDS - 1) as f64;
                damped_newton(&eq, seed)
            })
            .collect()
    };
    if roots.is_empty() {
        return Err(Error::NoConvergence);
    }
    roots.sort_by(f64::total_cmp);
    let tol = DEDUP_RTOL * bound.max(f64::MIN_POSITIVE);
    roots.dedup_by(|x, y| (*x - *y).abs() <= tol);

    roots
        .into_iter()
        .map(|q| {
            let detuning = PerCavity::new(eq.detuning(0, q), eq.detuning(1, q));
            let alpha_s = PerCavity::new(eq.alpha(0, q), eq.alpha(1, q));
            let p = params
                .with_detuning(CavityLabel::A, detuning.a)
                .with_detuning(CavityLabel::B, detuning.b);
            let d = derive(&p);
            let stable = stability(&build_drift(&d, &p))?.stable;
            Ok(OperatingPoint {
                detuning,
                alpha_s,
                q_s: q,
                stable,
            })
        })
        .collect()
}

fn positive(field: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be > 0, got {value}")))
    }
}

fn invalid(field: &'static str, reason: String) -> Error {
    Error::InvalidParameter { field, reason }
}
