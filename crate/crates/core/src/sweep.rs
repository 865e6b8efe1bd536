//! Parameter grids over detunings and powers, evaluated in parallel and
//! returned in grid order.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{build_drift, build_noise, stability, StabilityReport};
use crate::error::{Error, Result};
use crate::gaussian::{entanglement_report, symplectic_eigenvalues, EntanglementReport};
use crate::model::{derive, CavityLabel, DerivedQuantities, SystemParams};
use crate::steady_state::{lyapunov_residual, solve_lyapunov, CovarianceMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepVariable {
    DeltaA,
    DeltaB,
    PA,
    PB,
}

impl SweepVariable {
    pub fn label(self) -> CavityLabel {
        match self {
            SweepVariable::DeltaA | SweepVariable::PA => CavityLabel::A,
            SweepVariable::DeltaB | SweepVariable::PB => CavityLabel::B,
        }
    }

    pub fn is_detuning(self) -> bool {
        matches!(self, SweepVariable::DeltaA | SweepVariable::DeltaB)
    }
}

/// Unit in which an axis range is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AxisUnit {
    /// rad/s or W, as appropriate.
    Si,
    OmegaM,
    KappaA,
    /// Fraction of the base configuration's P_a.
    FractionPA,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Axis {
    pub variable: SweepVariable,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub unit: AxisUnit,
    /// Exclude `hi` (points are spaced as if `points + 1` included it).
    pub half_open: bool,
}

impl Axis {
    pub fn new(variable: SweepVariable, lo: f64, hi: f64, points: usize, unit: AxisUnit) -> Self {
        Self {
            variable,
            lo,
            hi,
            points,
            unit,
            half_open: false,
        }
    }

    pub fn half_open(mut self) -> Self {
        self.half_open = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.points == 0 {
            return Err(Error::Config("axis needs at least one point".into()));
        }
        if !(self.lo.is_finite() && self.hi.is_finite()) {
            return Err(Error::Config("axis range must be finite".into()));
        }
        if self.points > 1 && self.lo == self.hi {
            return Err(Error::Config("empty axis range".into()));
        }
        let ok = match self.unit {
            AxisUnit::Si => true,
            AxisUnit::OmegaM | AxisUnit::KappaA => self.variable.is_detuning(),
            AxisUnit::FractionPA => !self.variable.is_detuning(),
        };
        if !ok {
            return Err(Error::Config(format!(
                "unit {:?} does not apply to {:?}",
                self.unit, self.variable
            )));
        }
        Ok(())
    }

    fn factor(&self, base: &SystemParams) -> f64 {
        match self.unit {
            AxisUnit::Si => 1.0,
            AxisUnit::OmegaM => base.mirror.omega_m,
            AxisUnit::KappaA => base.cavity_a.kappa,
            AxisUnit::FractionPA => base.cavity_a.power,
        }
    }

    /// Axis values in SI units.
    pub fn values(&self, base: &SystemParams) -> Vec<f64> {
        let f = self.factor(base);
        if self.points == 1 {
            return vec![self.lo * f];
        }
        let intervals = if self.half_open { self.points } else { self.points - 1 } as f64;
        (0..self.points)
            .map(|i| (self.lo + (self.hi - self.lo) * i as f64 / intervals) * f)
            .collect()
    }

    pub fn apply(&self, params: &SystemParams, value: f64) -> SystemParams {
        if self.variable.is_detuning() {
            params.with_detuning(self.variable.label(), value)
        } else {
            params.with_power(self.variable.label(), value)
        }
    }
}

/// One or two axes; the first is the outer loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub axes: Vec<Axis>,
}

impl SweepSpec {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::Config("a sweep has one or two axes".into()));
        }
        for a in &axes {
            a.validate()?;
        }
        Ok(Self { axes })
    }

    pub fn points(&self, base: &SystemParams) -> Vec<SystemParams> {
        let mut out = vec![base.clone()];
        for axis in &self.axes {
            let values = axis.values(base);
            out = out
                .iter()
                .flat_map(|p| values.iter().map(move |&v| axis.apply(p, v)))
                .collect();
        }
        out
    }
}

/// Everything computed at one working point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointEvaluation {
    pub params: SystemParams,
    pub derived: DerivedQuantities,
    pub stability: StabilityReport,
    /// Present only for stable points.
    pub steady: Option<SteadyState>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyState {
    pub covariance: CovarianceMatrix,
    pub residual: f64,
    pub min_symplectic: f64,
    pub entanglement: EntanglementReport,
}

pub fn evaluate_point(params: &SystemParams) -> Result<PointEvaluation> {
    let derived = derive(params);
    let k = build_drift(&derived, params);
    let n = build_noise(&derived, params);
    let report = stability(&k)?;
    let steady = if report.stable {
        let v = solve_lyapunov(&k, &n)?;
        let residual = lyapunov_residual(&k.to_dmatrix(), &n.to_dmatrix(), &v.entries);
        let min_symplectic = symplectic_eigenvalues(&v)?[0];
        let entanglement = entanglement_report(&v)?;
        Some(SteadyState {
            covariance: v,
            residual,
            min_symplectic,
            entanglement,
        })
    } else {
        None
    };
    Ok(PointEvaluation {
        params: params.clone(),
        derived,
        stability: report,
        steady,
    })
}

/// Stability only, skipping the Lyapunov solve.
pub fn evaluate_stability(params: &SystemParams) -> Result<StabilityReport> {
    let derived = derive(params);
    stability(&build_drift(&derived, params))
}

pub fn run_grid(base: &SystemParams, spec: &SweepSpec) -> Result<Vec<PointEvaluation>> {
    spec.points(base).par_iter().map(evaluate_point).collect()
}

pub fn run_stability_grid(base: &SystemParams, spec: &SweepSpec) -> Result<Vec<(SystemParams, StabilityReport)>> {
    spec.points(base)
        .into_par_iter()
        .map(|p| evaluate_stability(&p).map(|r| (p, r)))
        .collect()
}
