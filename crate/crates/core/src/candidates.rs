//! Variance functionals and the candidate grid.
//!
//! Candidates are chosen so that the estimator variance, not the parameter
//! itself, grows geometrically: `θ₁ ≤ v_m / v_{m−1} ≤ θ₂` with
//! `v_m = σ² V(α_m)` and `V(α) = Σ λ_k q_α(λ_k)²`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{AdmissibleSet, FilterSpec};
use crate::model::SpectralProblem;
use crate::table::PairTable;

/// `V(α) = Σ_k λ_k q_α(λ_k)²`.
pub fn variance_v(problem: &SpectralProblem, spec: &FilterSpec, alpha: f64) -> Result<f64> {
    problem.check_admissible(spec, alpha)?;
    Ok(variance_unchecked(problem, spec, alpha))
}

fn variance_unchecked(problem: &SpectralProblem, spec: &FilterSpec, alpha: f64) -> f64 {
    problem
        .eigenvalues()
        .iter()
        .map(|&l| {
            let q = spec.weight(alpha, l);
            l * q * q
        })
        .sum()
}

/// `σ² max_k λ_k q_α(λ_k)²`, the operator norm of the estimator covariance.
pub fn weak_variance_u(problem: &SpectralProblem, spec: &FilterSpec, alpha: f64, sigma: f64) -> Result<f64> {
    problem.check_admissible(spec, alpha)?;
    check_sigma(sigma)?;
    let max = problem
        .eigenvalues()
        .iter()
        .map(|&l| {
            let q = spec.weight(alpha, l);
            l * q * q
        })
        .fold(0.0, f64::max);
    Ok(sigma * sigma * max)
}

/// `σ² Σ_k λ_k (q_{α_a}(λ_k) − q_{α_b}(λ_k))²`.
pub fn pairwise_variance_v(
    problem: &SpectralProblem,
    spec: &FilterSpec,
    alpha_a: f64,
    alpha_b: f64,
    sigma: f64,
) -> Result<f64> {
    problem.check_admissible(spec, alpha_a)?;
    problem.check_admissible(spec, alpha_b)?;
    check_sigma(sigma)?;
    Ok(sigma * sigma * pair_weights(problem, spec, alpha_a, alpha_b).iter().sum::<f64>())
}

/// Diagonal of `T*T (q_{α_a}(T*T) − q_{α_b}(T*T))²`.
pub(crate) fn pair_weights(problem: &SpectralProblem, spec: &FilterSpec, alpha_a: f64, alpha_b: f64) -> Vec<f64> {
    problem
        .eigenvalues()
        .iter()
        .map(|&l| {
            let d = spec.weight(alpha_a, l) - spec.weight(alpha_b, l);
            l * d * d
        })
        .collect()
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be nonnegative, got {sigma}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub alpha: f64,
    /// `|log V(α) − log target|`.
    pub achieved_error: f64,
}

const MAX_BISECTION_STEPS: usize = 200;

/// Solves `V(α) = target` for `α` in `bracket = (α_lo, α_hi)`.
///
/// On a continuum the search bisects in `log α` until the log-gap is within
/// `tol`. When no exact solution exists (discrete admissible set, jumps in
/// `V`, or a target outside `[V(α_hi), V(α_lo)]`) the admissible `α` with the
/// smallest variance not below the target is returned, or `α_lo` when even
/// that falls short, together with the achieved log-gap.
pub fn line_search_variance(
    problem: &SpectralProblem,
    spec: &FilterSpec,
    target: f64,
    tol: f64,
    bracket: (f64, f64),
) -> Result<LineSearch> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::invalid(format!("target must be positive, got {target}")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let (lo, hi) = bracket;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::invalid(format!("bad bracket [{lo:e}, {hi:e}]")));
    }
    let log_target = target.ln();
    let gap = |alpha: f64| variance_unchecked(problem, spec, alpha).ln() - log_target;

    if spec.admissible_set() == AdmissibleSet::Eigenvalues {
        return discrete_search(problem, spec, log_target, (lo, hi));
    }

    let gap_lo = gap(lo);
    if gap_lo < 0.0 {
        return Ok(LineSearch {
            alpha: lo,
            achieved_error: -gap_lo,
        });
    }
    let gap_hi = gap(hi);
    if gap_hi >= 0.0 {
        return Ok(LineSearch {
            alpha: hi,
            achieved_error: gap_hi,
        });
    }

    // invariant: V(lo) ≥ target > V(hi)
    let (mut lo, mut hi, mut gap_lo) = (lo, hi, gap_lo);
    if gap_lo <= tol {
        return Ok(LineSearch {
            alpha: lo,
            achieved_error: gap_lo,
        });
    }
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = (lo * hi).sqrt();
        if !(mid > lo && mid < hi) {
            break;
        }
        let g = gap(mid);
        if g.abs() <= tol {
            return Ok(LineSearch {
                alpha: mid,
                achieved_error: g.abs(),
            });
        }
        if g > 0.0 {
            lo = mid;
            gap_lo = g;
        } else {
            hi = mid;
        }
    }
    // jump in V: the left end is the smallest variance above the target
    Ok(LineSearch {
        alpha: lo,
        achieved_error: gap_lo,
    })
}

fn discrete_search(
    problem: &SpectralProblem,
    spec: &FilterSpec,
    log_target: f64,
    (lo, hi): (f64, f64),
) -> Result<LineSearch> {
    let mut admissible: Vec<f64> = problem
        .eigenvalues()
        .iter()
        .copied()
        .filter(|&l| l >= lo && l <= hi)
        .collect();
    admissible.dedup();
    if admissible.is_empty() {
        return Err(Error::EmptyAdmissibleSet { lo, hi });
    }
    let log_v = |alpha: f64| variance_unchecked(problem, spec, alpha).ln();
    // admissible is decreasing in α, so V increases along it
    let first_ok = admissible.partition_point(|&a| log_v(a) < log_target);
    let alpha = admissible[first_ok.min(admissible.len() - 1)];
    Ok(LineSearch {
        alpha,
        achieved_error: (log_v(alpha) - log_target).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub theta: f64,
    /// Unscaled variance of the first candidate, `V(α_0)`.
    pub anchor: f64,
    pub max_candidates: usize,
    /// Log-scale precision of the bisection.
    pub tol: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            theta: 2.0,
            anchor: 1.0,
            max_candidates: 10_000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateGrid {
    /// Strictly decreasing.
    pub alphas: Vec<f64>,
    /// `v_m = σ² V(α_m)`, strictly increasing.
    pub v: Vec<f64>,
    pub theta: f64,
    pub theta1: f64,
    pub theta2: f64,
    /// Set when the admissible set forced a ratio above the nominal `θ₂`.
    pub theta2_enlarged: bool,
    pub sigma: f64,
    /// Share of `V(α_{m_max})` carried by the last tenth of the spectrum.
    pub tail_fraction: f64,
}

impl CandidateGrid {
    pub fn m_max(&self) -> usize {
        self.alphas.len() - 1
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// `v_m / v_{m−1}` for `m = 1..=m_max`.
    pub fn ratios(&self) -> Vec<f64> {
        self.v.windows(2).map(|w| w[1] / w[0]).collect()
    }

    /// Pairwise variances `v_{m1,m2}` over all grid pairs.
    pub fn pairwise_variances(&self, problem: &SpectralProblem, spec: &FilterSpec) -> PairTable {
        let s2 = self.sigma * self.sigma;
        let weights: Vec<Vec<f64>> = self
            .alphas
            .iter()
            .map(|&a| problem.eigenvalues().iter().map(|&l| spec.weight(a, l)).collect())
            .collect();
        PairTable::from_fn(self.len(), |m1, m2| {
            let sum: f64 = problem
                .eigenvalues()
                .iter()
                .zip(weights[m1].iter().zip(&weights[m2]))
                .map(|(l, (q1, q2))| l * (q1 - q2) * (q1 - q2))
                .sum();
            s2 * sum
        })
    }

    /// CSV with columns `m,alpha,v_m,ratio`; the ratio of `m = 0` is empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "m,alpha,v_m,ratio")?;
        for (m, (a, v)) in self.alphas.iter().zip(&self.v).enumerate() {
            if m == 0 {
                writeln!(out, "{m},{a:e},{v:e},")?;
            } else {
                writeln!(out, "{m},{a:e},{v:e},{:e}", v / self.v[m - 1])?;
            }
        }
        Ok(())
    }
}

pub fn build_grid(problem: &SpectralProblem, spec: &FilterSpec, sigma: f64, theta: f64) -> Result<CandidateGrid> {
    build_grid_with(
        problem,
        spec,
        sigma,
        &GridOptions {
            theta,
            ..GridOptions::default()
        },
    )
}

pub fn build_grid_with(
    problem: &SpectralProblem,
    spec: &FilterSpec,
    sigma: f64,
    options: &GridOptions,
) -> Result<CandidateGrid> {
    let theta = options.theta;
    if !(theta > 1.0 && theta.is_finite()) {
        return Err(Error::invalid(format!("theta must exceed 1, got {theta}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    if !(options.anchor > 0.0) {
        return Err(Error::invalid("anchor variance must be positive"));
    }
    let theta1 = theta - (theta - 1.0) / 2.0;
    let mut theta2 = theta + (theta - 1.0) / 2.0;
    let mut enlarged = false;
    let s2 = sigma * sigma;
    let discrete = spec.admissible_set() == AdmissibleSet::Eigenvalues;
    let v_of = |alpha: f64| variance_unchecked(problem, spec, alpha);

    let first_bracket = if discrete {
        (problem.lambda_min(), problem.lambda_max())
    } else {
        expand_bracket(
            problem,
            spec,
            options.anchor,
            problem.lambda_min(),
            problem.lambda_max(),
        )
    };
    let start = line_search_variance(problem, spec, options.anchor, options.tol, first_bracket)?;
    let mut alphas = vec![start.alpha];
    let mut vars = vec![v_of(start.alpha)];

    while s2 * vars[vars.len() - 1] < 1.0 {
        if alphas.len() >= options.max_candidates {
            return Err(Error::Config(format!(
                "candidate grid exceeds {} entries",
                options.max_candidates
            )));
        }
        let prev_alpha = alphas[alphas.len() - 1];
        let prev_v = vars[vars.len() - 1];
        let target = theta * prev_v;
        let bracket = if discrete {
            match problem.eigenvalues().iter().find(|&&l| l < prev_alpha) {
                Some(&next) => (problem.lambda_min(), next),
                None => return Err(unreachable_variance(problem, sigma)),
            }
        } else {
            let (lo, _) = expand_bracket(problem, spec, target, prev_alpha, prev_alpha);
            (lo, prev_alpha)
        };
        let found = line_search_variance(problem, spec, target, options.tol, bracket)?;
        let v = v_of(found.alpha);
        let ratio = v / prev_v;
        if !(found.alpha < prev_alpha) || ratio < theta1 {
            return Err(unreachable_variance(problem, sigma));
        }
        if ratio > theta2 {
            theta2 = ratio;
            enlarged = true;
        }
        alphas.push(found.alpha);
        vars.push(v);
    }

    let tail_fraction = tail_fraction(problem, spec, alphas[alphas.len() - 1]);
    let v: Vec<f64> = vars.iter().map(|v| s2 * v).collect();
    if enlarged {
        // agree with the ratios of the stored, σ²-scaled variances
        theta2 = v.windows(2).map(|w| w[1] / w[0]).fold(theta2, f64::max);
    }
    Ok(CandidateGrid {
        alphas,
        v,
        theta,
        theta1,
        theta2,
        theta2_enlarged: enlarged,
        sigma,
        tail_fraction,
    })
}

fn unreachable_variance(problem: &SpectralProblem, sigma: f64) -> Error {
    Error::Config(format!(
        "'{}' (n = {}) cannot carry variance 1/σ² at σ = {sigma:e}; increase the truncation",
        problem.label(),
        problem.len()
    ))
}

/// Widens `[lo, hi]` geometrically until `V(lo) ≥ target ≥ V(hi)` or the
/// floating-point range is exhausted.
fn expand_bracket(problem: &SpectralProblem, spec: &FilterSpec, target: f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    while variance_unchecked(problem, spec, hi) > target && hi < 1e300 {
        hi *= 16.0;
    }
    while variance_unchecked(problem, spec, lo) < target && lo > 1e-300 {
        lo /= 16.0;
    }
    (lo, hi)
}

fn tail_fraction(problem: &SpectralProblem, spec: &FilterSpec, alpha: f64) -> f64 {
    let n = problem.len();
    let start = n - n / 10;
    let terms: Vec<f64> = problem
        .eigenvalues()
        .iter()
        .map(|&l| {
            let q = spec.weight(alpha, l);
            l * q * q
        })
        .collect();
    let total: f64 = terms.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    terms[start..].iter().sum::<f64>() / total
}

/// Hutchinson estimate of `trace(A)` from `probes` Rademacher vectors.
/// `apply(x, out)` must write `A x` into `out`.
pub fn hutchinson_trace<F>(mut apply: F, dim: usize, probes: usize, seed: u64) -> f64
where
    F: FnMut(&[f64], &mut [f64]),
{
    let probes = probes.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = vec![0.0; dim];
    let mut az = vec![0.0; dim];
    let mut total = 0.0;
    for _ in 0..probes {
        for zi in z.iter_mut() {
            *zi = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        apply(&z, &mut az);
        total += z.iter().zip(&az).map(|(a, b)| a * b).sum::<f64>();
    }
    total / probes as f64
}
