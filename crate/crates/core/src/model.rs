//! The inverse problem in its singular-value sequence space.
//!
//! Observations are `y_k = g_k + σ ε_k` where `g_k` are the exact data
//! coefficients and `ε_k` are i.i.d. standard normal. A filter estimator is
//! the coefficient list `f̂_k = q_α(λ_k) √λ_k y_k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::filters::{AdmissibleSet, FilterSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralProblem {
    eigenvalues: Vec<f64>,
    singular_values: Vec<f64>,
    truth: Vec<f64>,
    data_truth: Vec<f64>,
    label: String,
}

impl SpectralProblem {
    pub fn new(label: impl Into<String>, eigenvalues: Vec<f64>, truth: Vec<f64>, data_truth: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if eigenvalues.is_empty() {
            return Err(Error::InvalidProblem(format!("{label}: empty spectrum")));
        }
        check_len(eigenvalues.len(), truth.len())?;
        check_len(eigenvalues.len(), data_truth.len())?;
        if let Some(bad) = eigenvalues.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidProblem(format!(
                "{label}: eigenvalue {bad:e} is not strictly positive"
            )));
        }
        if let Some(k) = eigenvalues.windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::InvalidProblem(format!(
                "{label}: eigenvalues increase at index {}",
                k + 1
            )));
        }
        if truth.iter().chain(&data_truth).any(|x| !x.is_finite()) {
            return Err(Error::InvalidProblem(format!("{label}: non-finite coefficient")));
        }
        let singular_values = eigenvalues.iter().map(|l| l.sqrt()).collect();
        Ok(SpectralProblem {
            eigenvalues,
            singular_values,
            truth,
            data_truth,
            label,
        })
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn truth(&self) -> &[f64] {
        &self.truth
    }

    pub fn data_truth(&self) -> &[f64] {
        &self.data_truth
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[self.len() - 1]
    }

    /// Same spectrum and truth, data replaced by the exact forward image
    /// `√λ_k f†_k`.
    pub fn with_forward_data(&self) -> SpectralProblem {
        let data_truth = self
            .singular_values
            .iter()
            .zip(&self.truth)
            .map(|(s, f)| s * f)
            .collect();
        SpectralProblem {
            data_truth,
            ..self.clone()
        }
    }

    /// Rejects parameters outside the filter's admissible set.
    pub fn check_admissible(&self, spec: &FilterSpec, alpha: f64) -> Result<()> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
        }
        if spec.admissible_set() == AdmissibleSet::Eigenvalues
            && self.eigenvalues.binary_search_by(|l| alpha.total_cmp(l)).is_err()
        {
            return Err(Error::invalid(format!(
                "alpha {alpha:e} is not an eigenvalue of '{}'",
                self.label
            )));
        }
        Ok(())
    }

    /// Per-coordinate estimator multipliers `q_α(λ_k) √λ_k`.
    pub fn multipliers(&self, spec: &FilterSpec, alpha: f64) -> Result<Vec<f64>> {
        self.check_admissible(spec, alpha)?;
        Ok(self.multipliers_unchecked(spec, alpha))
    }

    pub(crate) fn multipliers_unchecked(&self, spec: &FilterSpec, alpha: f64) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .zip(&self.singular_values)
            .map(|(&l, &s)| spec.weight(alpha, l) * s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataRealization {
    pub y: Vec<f64>,
    pub sigma: f64,
    pub seed: u64,
}

impl DataRealization {
    /// Noise-free observation tagged with a nominal noise level.
    pub fn exact(problem: &SpectralProblem, sigma: f64) -> Self {
        DataRealization {
            y: problem.data_truth.clone(),
            sigma,
            seed: 0,
        }
    }
}

/// Generator for stream `stream` of master seed `seed`. Distinct streams
/// never overlap, so `(seed, stream)` pins a realization.
pub fn noise_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn simulate_data(problem: &SpectralProblem, sigma: f64, seed: u64) -> Result<DataRealization> {
    simulate_data_stream(problem, sigma, seed, 0)
}

pub fn simulate_data_stream(problem: &SpectralProblem, sigma: f64, seed: u64, stream: u64) -> Result<DataRealization> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let mut rng = noise_rng(seed, stream);
    let y = problem
        .data_truth
        .iter()
        .map(|g| {
            let eps: f64 = rng.sample(StandardNormal);
            g + sigma * eps
        })
        .collect();
    Ok(DataRealization { y, sigma, seed })
}

pub fn estimate(problem: &SpectralProblem, data: &DataRealization, spec: &FilterSpec, alpha: f64) -> Result<Vec<f64>> {
    estimate_from(problem, &data.y, spec, alpha)
}

/// `f̂_k = q_α(λ_k) √λ_k y_k` for raw coefficients `y`.
pub fn estimate_from(problem: &SpectralProblem, y: &[f64], spec: &FilterSpec, alpha: f64) -> Result<Vec<f64>> {
    check_len(problem.len(), y.len())?;
    let w = problem.multipliers(spec, alpha)?;
    Ok(w.iter().zip(y).map(|(w, y)| w * y).collect())
}

pub fn pairwise_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(squared_distance(a, b).sqrt())
}

pub fn squared_error(estimate: &[f64], problem: &SpectralProblem) -> Result<f64> {
    check_len(estimate.len(), problem.len())?;
    Ok(squared_distance(estimate, &problem.truth))
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
