//! Prepayment intensities `gamma(x, m, z) = gamma_0(x) + eps * gamma_1(x, m, z)`.
//!
//! `x` is the factor value, `m` the contract rate of the loan and `z` the
//! refinancing rate currently available.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::amortization::{xi, MortgageSpec};
use crate::error::{CouponError, Result};

pub type BaselineFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type PerturbationFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// The factor-only part `gamma_0(x)`.
#[derive(Clone)]
pub enum Baseline {
    Zero,
    Constant(f64),
    /// `level + slope * x`
    RateLinear { level: f64, slope: f64 },
    Custom(BaselineFn),
}

impl Baseline {
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Baseline::Zero => 0.0,
            Baseline::Constant(g) => *g,
            Baseline::RateLinear { level, slope } => level + slope * x,
            Baseline::Custom(f) => f(x),
        }
    }

    /// `Some(g)` when the baseline is the constant `g`.
    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Baseline::Zero => Some(0.0),
            Baseline::Constant(g) => Some(*g),
            Baseline::RateLinear { level, slope } if *slope == 0.0 => Some(*level),
            _ => None,
        }
    }
}

impl fmt::Debug for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Baseline::Zero => write!(f, "Zero"),
            Baseline::Constant(g) => write!(f, "Constant({g})"),
            Baseline::RateLinear { level, slope } => {
                write!(f, "RateLinear {{ level: {level}, slope: {slope} }}")
            }
            Baseline::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// The part `gamma_1(x, m, z)` that may depend on contract and refinancing rates.
#[derive(Clone)]
pub enum Perturbation {
    Zero,
    Constant(f64),
    /// `level + rate_slope * x + k * (m - z)^+`
    RefiIncentive { level: f64, rate_slope: f64, k: f64 },
    Custom(PerturbationFn),
}

impl Perturbation {
    #[inline]
    pub fn value(&self, x: f64, m: f64, z: f64) -> f64 {
        match self {
            Perturbation::Zero => 0.0,
            Perturbation::Constant(g) => *g,
            Perturbation::RefiIncentive {
                level,
                rate_slope,
                k,
            } => level + rate_slope * x + k * (m - z).max(0.0),
            Perturbation::Custom(f) => f(x, m, z),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Perturbation::Zero)
    }
}

impl fmt::Debug for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Perturbation::Zero => write!(f, "Zero"),
            Perturbation::Constant(g) => write!(f, "Constant({g})"),
            Perturbation::RefiIncentive {
                level,
                rate_slope,
                k,
            } => write!(
                f,
                "RefiIncentive {{ level: {level}, rate_slope: {rate_slope}, k: {k} }}"
            ),
            Perturbation::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// A prepayment intensity split into baseline and scaled perturbation.
#[derive(Debug, Clone)]
pub struct IntensityModel {
    pub baseline: Baseline,
    pub perturbation: Perturbation,
    pub epsilon: f64,
}

impl IntensityModel {
    pub fn new(baseline: Baseline, perturbation: Perturbation, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(CouponError::Config(format!(
                "epsilon must be >= 0, got {epsilon}"
            )));
        }
        Ok(Self {
            baseline,
            perturbation,
            epsilon,
        })
    }

    /// No prepayment at all.
    pub fn zero() -> Self {
        Self {
            baseline: Baseline::Zero,
            perturbation: Perturbation::Zero,
            epsilon: 1.0,
        }
    }

    /// A constant intensity carried entirely by the baseline.
    pub fn constant(gamma: f64) -> Self {
        Self {
            baseline: Baseline::Constant(gamma),
            perturbation: Perturbation::Zero,
            epsilon: 1.0,
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }

    /// The model with its perturbation dropped.
    pub fn baseline_only(&self) -> Self {
        Self {
            baseline: self.baseline.clone(),
            perturbation: Perturbation::Zero,
            epsilon: self.epsilon,
        }
    }

    /// Full intensity, with domain checks on the rates.
    pub fn eval(&self, x: f64, m: f64, z: f64) -> Result<f64> {
        if !(m >= 0.0 && z >= 0.0) {
            return Err(CouponError::domain(
                "intensity eval",
                format!("rates must be >= 0, got m = {m}, z = {z}"),
            ));
        }
        Ok(self.eval_unchecked(x, m, z))
    }

    #[inline]
    pub fn eval_unchecked(&self, x: f64, m: f64, z: f64) -> f64 {
        self.baseline.value(x) + self.epsilon * self.perturbation.value(x, m, z)
    }

    #[inline]
    pub fn baseline_value(&self, x: f64) -> f64 {
        self.baseline.value(x)
    }

    /// `eps * gamma_1(x, m, z)`.
    #[inline]
    pub fn scaled_perturbation(&self, x: f64, m: f64, z: f64) -> f64 {
        self.epsilon * self.perturbation.value(x, m, z)
    }
}

/// How a full intensity is split into baseline and perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decomposition {
    /// `gamma_0 = 0`, everything goes into the perturbation.
    ZeroBaseline,
    /// `gamma_0` is the constant floor of the intensity.
    ConstantBaseline,
}

impl Decomposition {
    pub fn label(&self) -> &'static str {
        match self {
            Decomposition::ZeroBaseline => "zero",
            Decomposition::ConstantBaseline => "const",
        }
    }
}

/// `gamma(x, m, z) = gamma_base + k (m - z)^+`: a constant turnover rate plus
/// refinancing proportional to the in-the-money amount.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefiIncentiveIntensity {
    pub gamma_base: f64,
    pub k: f64,
}

impl RefiIncentiveIntensity {
    pub fn new(gamma_base: f64, k: f64) -> Result<Self> {
        if !(gamma_base.is_finite() && gamma_base >= 0.0 && k.is_finite() && k >= 0.0) {
            return Err(CouponError::Config(format!(
                "refi-incentive needs gamma_base >= 0 and k >= 0, got {gamma_base}, {k}"
            )));
        }
        Ok(Self { gamma_base, k })
    }

    pub fn eval(&self, m: f64, z: f64) -> f64 {
        self.gamma_base + self.k * (m - z).max(0.0)
    }

    /// The same intensity split according to `decomposition`, with `eps = 1`.
    pub fn decompose(&self, decomposition: Decomposition) -> IntensityModel {
        match decomposition {
            Decomposition::ZeroBaseline => IntensityModel {
                baseline: Baseline::Zero,
                perturbation: Perturbation::RefiIncentive {
                    level: self.gamma_base,
                    rate_slope: 0.0,
                    k: self.k,
                },
                epsilon: 1.0,
            },
            Decomposition::ConstantBaseline => IntensityModel {
                baseline: Baseline::Constant(self.gamma_base),
                perturbation: Perturbation::RefiIncentive {
                    level: 0.0,
                    rate_slope: 0.0,
                    k: self.k,
                },
                epsilon: 1.0,
            },
        }
    }
}

/// Step for the central difference estimate of `gamma_m`.
pub const GAMMA_M_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ViolationKind {
    /// Intensity falls as the contract rate rises.
    NegativeSensitivity,
    /// Sensitivity exceeds `Xi(m T)`.
    AboveXiBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityViolation {
    pub x: f64,
    pub m: f64,
    pub z: f64,
    pub gamma_m: f64,
    pub bound: f64,
    pub kind: ViolationKind,
}

/// Outcome of [`admissibility_report`]. Diagnostic only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub points_checked: usize,
    pub violations: Vec<AdmissibilityViolation>,
    /// Points where one-sided differences in `m` disagree (`(x, m, z)`).
    pub kinks: Vec<(f64, f64, f64)>,
}

impl AdmissibilityReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `0 <= gamma_m(x, m, z) <= Xi(m T)` on a grid by finite differences.
pub fn admissibility_report(
    model: &IntensityModel,
    spec: &MortgageSpec,
    m_grid: &[f64],
    z_grid: &[f64],
    x_grid: &[f64],
) -> AdmissibilityReport {
    let h = GAMMA_M_STEP;
    let mut report = AdmissibilityReport::default();
    for &x in x_grid {
        for &m in m_grid {
            let bound = if m > 0.0 {
                xi(m * spec.maturity()).unwrap_or(f64::INFINITY)
            } else {
                f64::INFINITY
            };
            for &z in z_grid {
                report.points_checked += 1;
                let g = |mm: f64| model.eval_unchecked(x, mm, z);
                let mid = g(m);
                let fwd = (g(m + h) - mid) / h;
                let (gamma_m, bwd) = if m >= h {
                    let bwd = (mid - g(m - h)) / h;
                    ((g(m + h) - g(m - h)) / (2.0 * h), Some(bwd))
                } else {
                    (fwd, None)
                };
                if let Some(bwd) = bwd {
                    if (fwd - bwd).abs() > 1e-6 * (1.0 + fwd.abs().max(bwd.abs())) {
                        report.kinks.push((x, m, z));
                    }
                }
                let kind = if gamma_m < -1e-9 {
                    Some(ViolationKind::NegativeSensitivity)
                } else if gamma_m > bound {
                    Some(ViolationKind::AboveXiBound)
                } else {
                    None
                };
                if let Some(kind) = kind {
                    report.violations.push(AdmissibilityViolation {
                        x,
                        m,
                        z,
                        gamma_m,
                        bound,
                        kind,
                    });
                }
            }
        }
    }
    report
}
