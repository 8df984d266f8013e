//! Parameter choice rules over a candidate grid.
//!
//! Pairwise tables are indexed `(m1, m2)` with `m1 < m2`, i.e. `α_{m1} > α_{m2}`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{pair_weights, weak_variance_u, CandidateGrid};
use crate::error::{Error, Result};
use crate::filters::FilterSpec;
use crate::genchi2::{critical_value_from_weights, WeightVector};
use crate::model::{squared_distance, SpectralProblem};
use crate::table::PairTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selector {
    Solit,
    Lepskii,
    Oracle,
    Optimal,
    NoiseLevel,
}

impl Selector {
    pub const ALL: [Selector; 5] = [
        Selector::Solit,
        Selector::Lepskii,
        Selector::Oracle,
        Selector::Optimal,
        Selector::NoiseLevel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Selector::Solit => "solit",
            Selector::Lepskii => "lepskii",
            Selector::Oracle => "oracle",
            Selector::Optimal => "optimal",
            Selector::NoiseLevel => "noise-level",
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Selector::ALL
            .into_iter()
            .find(|sel| sel.name() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown selector '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    /// `κ_{m1,m2} = σ z_{m1,m2}(x_{m1}) + β √v_{m1,m2}`.
    pub kappa: PairTable,
    /// `x_m = 2(1+γ) ln(v_{m+1}/v_0)` for `m < m_max`.
    pub x: Vec<f64>,
    pub beta: f64,
    pub gamma: f64,
}

impl ThresholdTable {
    pub fn size(&self) -> usize {
        self.kappa.size()
    }
}

/// One threshold entry from its critical value and pairwise variance.
pub fn threshold_entry(sigma: f64, z: f64, beta: f64, v_pair: f64) -> f64 {
    sigma * z + beta * v_pair.sqrt()
}

fn check_tuning(beta: f64, gamma: f64) -> Result<()> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("beta must be nonnegative, got {beta}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

pub fn build_thresholds(
    problem: &SpectralProblem,
    spec: &FilterSpec,
    grid: &CandidateGrid,
    beta: f64,
    gamma: f64,
) -> Result<ThresholdTable> {
    check_tuning(beta, gamma)?;
    let size = grid.len();
    let x: Vec<f64> = (0..grid.m_max())
        .map(|m| 2.0 * (1.0 + gamma) * (grid.v[m + 1] / grid.v[0]).ln())
        .collect();
    let s2 = grid.sigma * grid.sigma;
    let rows: Vec<Vec<f64>> = (0..size)
        .into_par_iter()
        .map(|m1| {
            (m1 + 1..size)
                .map(|m2| {
                    let w = pair_weights(problem, spec, grid.alphas[m1], grid.alphas[m2]);
                    let v_pair = s2 * w.iter().sum::<f64>();
                    let cv = critical_value_from_weights(&WeightVector::new(w)?, x[m1])?;
                    Ok(threshold_entry(grid.sigma, cv.z, beta, v_pair))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut kappa = PairTable::new(size);
    for (m1, row) in rows.iter().enumerate() {
        for (k, &value) in row.iter().enumerate() {
            kappa.set(m1, m1 + 1 + k, value);
        }
    }
    Ok(ThresholdTable { kappa, x, beta, gamma })
}

/// Smallest `m1` whose comparisons with every finer candidate pass, or the
/// last index when none does.
fn first_accepted(size: usize, mut passes: impl FnMut(usize, usize) -> bool) -> usize {
    let m_max = size.saturating_sub(1);
    (0..m_max)
        .find(|&m1| (m1 + 1..size).all(|m2| passes(m1, m2)))
        .unwrap_or(m_max)
}

pub fn solit_select(bhat: &PairTable, thresholds: &ThresholdTable) -> usize {
    solit_select_by(thresholds, |m1, m2| bhat.get(m1, m2))
}

/// SOLIT with distances supplied on demand; only the comparisons the scan
/// reaches are evaluated.
pub fn solit_select_by(thresholds: &ThresholdTable, mut bhat: impl FnMut(usize, usize) -> f64) -> usize {
    let kappa = &thresholds.kappa;
    first_accepted(kappa.size(), |m1, m2| bhat(m1, m2) <= kappa.get(m1, m2))
}

/// Oracle index from deterministic distances `b` and pairwise variances `v`.
pub fn oracle_select(b: &PairTable, v: &PairTable, beta: f64) -> usize {
    let size = b.size();
    let b2 = beta * beta;
    let last_bad = (0..size.saturating_sub(1))
        .rev()
        .find(|&m1| (m1 + 1..size).any(|m2| b.get(m1, m2).powi(2) - b2 * v.get(m1, m2) > 0.0));
    match last_bad {
        Some(m1) => m1 + 1,
        None => 0,
    }
}

pub fn lepskii_select(bhat: &PairTable, grid: &CandidateGrid, kappa_tune: f64) -> usize {
    lepskii_select_by(grid, kappa_tune, |m1, m2| bhat.get(m1, m2))
}

/// Classical balancing: `b̂_{m1,m2} ≤ 4 κ μ_{m2}` with `μ_k = √v_k`.
pub fn lepskii_select_by(grid: &CandidateGrid, kappa_tune: f64, mut bhat: impl FnMut(usize, usize) -> f64) -> usize {
    debug_assert!(kappa_tune >= 1.0);
    first_accepted(grid.len(), |m1, m2| {
        bhat(m1, m2) <= 4.0 * kappa_tune * grid.v[m2].sqrt()
    })
}

/// Index of the smallest error; ties go to the smaller index.
pub fn optimal_select(errors: &[f64]) -> usize {
    let mut best = 0;
    for (m, e) in errors.iter().enumerate() {
        if *e < errors[best] {
            best = m;
        }
    }
    best
}

/// Candidate with `α_m` closest to `σ` on a log scale.
pub fn noise_level_select(grid: &CandidateGrid, sigma: f64) -> usize {
    let target = sigma.ln();
    let mut best = 0;
    let mut best_gap = f64::INFINITY;
    for (m, a) in grid.alphas.iter().enumerate() {
        let gap = (a.ln() - target).abs();
        if gap < best_gap {
            best = m;
            best_gap = gap;
        }
    }
    best
}

/// `min{m : b_m² ≤ (√θ₁ − 1)² β² v_m}` for bias norms `b_m`; the last index
/// when the set is empty.
pub fn m_double_star(bias: &[f64], v: &[f64], theta1: f64, beta: f64) -> usize {
    let c = (theta1.sqrt() - 1.0) * beta;
    let c2 = c * c;
    bias.iter()
        .zip(v)
        .position(|(b, v)| b * b <= c2 * v)
        .unwrap_or(bias.len().saturating_sub(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConstants {
    pub c1: f64,
    pub c2: f64,
}

pub fn oracle_constants(
    grid: &CandidateGrid,
    m_star: usize,
    u_mstar: f64,
    beta: f64,
    gamma: f64,
) -> Result<OracleConstants> {
    check_tuning(beta, gamma)?;
    if m_star > grid.m_max() {
        return Err(Error::invalid(format!("m* = {m_star} outside [0, {}]", grid.m_max())));
    }
    Ok(oracle_constants_raw(
        grid.theta1,
        grid.v[0],
        grid.v[m_star],
        u_mstar,
        grid.m_max(),
        beta,
        gamma,
    ))
}

/// Constants from the grid quantities they depend on.
pub fn oracle_constants_raw(
    theta1: f64,
    v0: f64,
    v_mstar: f64,
    u_mstar: f64,
    m_max: usize,
    beta: f64,
    gamma: f64,
) -> OracleConstants {
    let c1 = 2.0 * 3f64.sqrt() / (theta1.powf(gamma) - 1.0) * (v0 / v_mstar).powf(1.0 + gamma);
    let log_term = 2.0 * (1.0 + gamma) * (v_mstar / v0).ln() + (1.0 + m_max as f64).ln();
    let c2 = beta * v_mstar.sqrt() + (2.0 * u_mstar * log_term).sqrt();
    OracleConstants { c1, c2 }
}

pub fn price_of_adaptation(r_mstar: f64, c2: f64) -> f64 {
    let s = r_mstar.max(0.0).sqrt() + c2;
    s * s
}

/// Data-independent quantities behind the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicTables {
    /// Noise-free distances `‖E f̂_{m1} − E f̂_{m2}‖`.
    pub b: PairTable,
    /// `v_{m1,m2}`.
    pub v: PairTable,
    /// Bias norms `‖E f̂_m − f†‖`.
    pub bias: Vec<f64>,
    /// `u_m`.
    pub u: Vec<f64>,
}

impl DeterministicTables {
    pub fn compute(problem: &SpectralProblem, spec: &FilterSpec, grid: &CandidateGrid) -> Self {
        let means: Vec<Vec<f64>> = grid
            .alphas
            .iter()
            .map(|&a| {
                problem
                    .multipliers_unchecked(spec, a)
                    .iter()
                    .zip(problem.data_truth())
                    .map(|(w, g)| w * g)
                    .collect()
            })
            .collect();
        let b = PairTable::from_fn(grid.len(), |m1, m2| squared_distance(&means[m1], &means[m2]).sqrt());
        let v = grid.pairwise_variances(problem, spec);
        let bias = means
            .iter()
            .map(|m| squared_distance(m, problem.truth()).sqrt())
            .collect();
        let u = grid
            .alphas
            .iter()
            .map(|&a| weak_variance_u(problem, spec, a, grid.sigma).expect("grid entries are admissible"))
            .collect();
        DeterministicTables { b, v, bias, u }
    }

    pub fn oracle_index(&self, beta: f64) -> usize {
        oracle_select(&self.b, &self.v, beta)
    }
}
