//! Ordered spectral filters `q_α(λ)`.
//!
//! A filter estimator applies `q_α(T*T) T*` to the data. In the singular
//! basis that is a per-coordinate multiplier `q_α(λ_k) √λ_k`, so everything
//! downstream only ever needs the scalar weight and its residual
//! `1 − λ q_α(λ)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    #[serde(rename = "cutoff")]
    SpectralCutoff,
    Tikhonov,
    Showalter,
    Landweber,
}

impl FilterKind {
    pub const ALL: [FilterKind; 4] = [
        FilterKind::SpectralCutoff,
        FilterKind::Tikhonov,
        FilterKind::Showalter,
        FilterKind::Landweber,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::SpectralCutoff => "cutoff",
            FilterKind::Tikhonov => "tikhonov",
            FilterKind::Showalter => "showalter",
            FilterKind::Landweber => "landweber",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cutoff" | "spectral_cutoff" | "spectral-cutoff" => Ok(FilterKind::SpectralCutoff),
            "tikhonov" => Ok(FilterKind::Tikhonov),
            "showalter" => Ok(FilterKind::Showalter),
            "landweber" => Ok(FilterKind::Landweber),
            other => Err(Error::invalid(format!("unknown filter '{other}'"))),
        }
    }
}

/// Where the regularization parameter may live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdmissibleSet {
    /// Any `α ∈ (0, ∞)`.
    Continuum,
    /// Only the eigenvalues of the problem at hand.
    Eigenvalues,
}

/// An ordered filter together with its constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    /// Bound on `α q_α(λ)`.
    pub cq_prime: f64,
    /// Landweber relaxation; `step · λ_max ≤ 1` and `step ≤ 1` are required.
    pub landweber_step: Option<f64>,
}

impl FilterSpec {
    pub fn tikhonov() -> Self {
        Self::simple(FilterKind::Tikhonov)
    }

    pub fn showalter() -> Self {
        Self::simple(FilterKind::Showalter)
    }

    pub fn spectral_cutoff() -> Self {
        Self::simple(FilterKind::SpectralCutoff)
    }

    pub fn landweber(step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= 1.0 && step.is_finite()) {
            return Err(Error::invalid(format!("landweber step must lie in (0, 1], got {step}")));
        }
        Ok(FilterSpec {
            kind: FilterKind::Landweber,
            cq_prime: 1.0,
            landweber_step: Some(step),
        })
    }

    /// Builds the filter for a spectrum with largest eigenvalue `lambda_max`.
    /// Only Landweber depends on it (step `min(1, 1/λ_max)`).
    pub fn for_spectrum(kind: FilterKind, lambda_max: f64) -> Result<Self> {
        match kind {
            FilterKind::Landweber => Self::landweber((1.0 / lambda_max).min(1.0)),
            k => Ok(Self::simple(k)),
        }
    }

    fn simple(kind: FilterKind) -> Self {
        FilterSpec {
            kind,
            cq_prime: 1.0,
            landweber_step: None,
        }
    }

    pub fn admissible_set(&self) -> AdmissibleSet {
        match self.kind {
            FilterKind::SpectralCutoff => AdmissibleSet::Eigenvalues,
            _ => AdmissibleSet::Continuum,
        }
    }

    /// Whether `α ↦ q_α(λ)` is continuous, so that the variance can be hit
    /// exactly by a line search.
    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, FilterKind::Tikhonov | FilterKind::Showalter)
    }

    /// Landweber iteration count for a given `α`: `⌊1/(step·α)⌋`.
    pub fn landweber_iterations(&self, alpha: f64) -> f64 {
        let step = self.landweber_step.unwrap_or(1.0);
        (1.0 / (step * alpha)).floor()
    }

    /// Checked `q_α(λ)`.
    pub fn filter_weight(&self, alpha: f64, lambda: f64) -> Result<f64> {
        check_args(alpha, lambda)?;
        Ok(self.weight(alpha, lambda))
    }

    /// Checked `1 − λ q_α(λ)`.
    pub fn residual_weight(&self, alpha: f64, lambda: f64) -> Result<f64> {
        check_args(alpha, lambda)?;
        Ok(self.residual(alpha, lambda))
    }

    /// Unchecked `q_α(λ)`; callers guarantee `α > 0`, `λ ≥ 0`.
    #[inline]
    pub(crate) fn weight(&self, alpha: f64, lambda: f64) -> f64 {
        match self.kind {
            FilterKind::SpectralCutoff => {
                if lambda >= alpha && lambda > 0.0 {
                    1.0 / lambda
                } else {
                    0.0
                }
            }
            FilterKind::Tikhonov => 1.0 / (lambda + alpha),
            FilterKind::Showalter => {
                if lambda == 0.0 {
                    1.0 / alpha
                } else {
                    -(-lambda / alpha).exp_m1() / lambda
                }
            }
            FilterKind::Landweber => {
                let step = self.landweber_step.unwrap_or(1.0);
                let iters = self.landweber_iterations(alpha);
                if iters == 0.0 {
                    0.0
                } else if lambda == 0.0 {
                    step * iters
                } else {
                    -(iters * (-step * lambda).ln_1p()).exp_m1() / lambda
                }
            }
        }
    }

    #[inline]
    pub(crate) fn residual(&self, alpha: f64, lambda: f64) -> f64 {
        match self.kind {
            FilterKind::Showalter => (-lambda / alpha).exp(),
            FilterKind::Landweber => {
                let step = self.landweber_step.unwrap_or(1.0);
                let iters = self.landweber_iterations(alpha);
                if iters == 0.0 {
                    1.0
                } else {
                    (iters * (-step * lambda).ln_1p()).exp()
                }
            }
            _ => 1.0 - lambda * self.weight(alpha, lambda),
        }
    }
}

fn check_args(alpha: f64, lambda: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be nonnegative, got {lambda}")));
    }
    Ok(())
}

/// Anything that can be checked against the ordered-filter axioms.
pub trait SpectralFilter {
    fn q(&self, alpha: f64, lambda: f64) -> f64;
    fn cq_prime(&self) -> f64;
}

impl SpectralFilter for FilterSpec {
    fn q(&self, alpha: f64, lambda: f64) -> f64 {
        self.weight(alpha, lambda)
    }

    fn cq_prime(&self) -> f64 {
        self.cq_prime
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axiom {
    Nonnegative,
    AlphaBound,
    LambdaBound,
    Ordered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub axiom: Axiom,
    pub alpha: f64,
    pub lambda: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub checked: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, axiom: Axiom) -> usize {
        self.violations.iter().filter(|v| v.axiom == axiom).count()
    }
}

const AXIOM_SLACK: f64 = 1e-12;

/// Checks `q ≥ 0`, `α q ≤ C_q'`, `λ q ≤ 1` and monotone decrease in `α` on
/// every sample pair.
pub fn validate_ordered_filter<F: SpectralFilter + ?Sized>(
    filter: &F,
    alphas: &[f64],
    lambdas: &[f64],
) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut sorted: Vec<f64> = alphas.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));

    for &lambda in lambdas {
        let mut previous: Option<f64> = None;
        for &alpha in &sorted {
            let q = filter.q(alpha, lambda);
            report.checked += 1;
            let mut flag = |axiom, value| {
                report.violations.push(Violation {
                    axiom,
                    alpha,
                    lambda,
                    value,
                })
            };
            if !(q >= 0.0) {
                flag(Axiom::Nonnegative, q);
            }
            if alpha * q > filter.cq_prime() * (1.0 + AXIOM_SLACK) {
                flag(Axiom::AlphaBound, alpha * q);
            }
            if lambda * q > 1.0 + AXIOM_SLACK {
                flag(Axiom::LambdaBound, lambda * q);
            }
            // alphas are visited in decreasing order, so q must not decrease
            if let Some(prev) = previous {
                if q < prev * (1.0 - AXIOM_SLACK) {
                    flag(Axiom::Ordered, q);
                }
            }
            previous = Some(q);
        }
    }
    report
}
