//! Monte Carlo experiments over a geometric noise-level grid.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{build_grid, pair_weights, CandidateGrid};
use crate::error::{Error, Result};
use crate::filters::{FilterKind, FilterSpec};
use crate::genchi2::{cumulant_traces, ltz_tail_quantile, mc_tail_quantiles, WeightVector};
use crate::model::{noise_rng, squared_distance, SpectralProblem};
use crate::problems::ProblemSpec;
use crate::selectors::{
    build_thresholds, lepskii_select_by, m_double_star, noise_level_select, optimal_select, oracle_constants,
    price_of_adaptation, solit_select_by, DeterministicTables, Selector, ThresholdTable,
};

/// Geometric grid from `start` down to `stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaGrid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl SigmaGrid {
    pub fn new(start: f64, stop: f64, count: usize) -> Self {
        SigmaGrid { start, stop, count }
    }

    /// Strictly decreasing values; `count = 1` gives `[start]`.
    pub fn values(&self) -> Result<Vec<f64>> {
        let SigmaGrid { start, stop, count } = *self;
        if count == 0 {
            return Err(Error::Config("sigma grid needs at least one point".into()));
        }
        if !(start > 0.0 && stop > 0.0 && start.is_finite() && stop.is_finite()) {
            return Err(Error::Config(format!(
                "sigma bounds must be positive, got {start:e}, {stop:e}"
            )));
        }
        if count == 1 {
            return Ok(vec![start]);
        }
        if !(stop < start) {
            return Err(Error::Config(format!(
                "sigma grid must decrease: start {start:e} ≤ stop {stop:e}"
            )));
        }
        let step = (stop / start).ln() / (count - 1) as f64;
        Ok((0..count)
            .map(|i| {
                if i + 1 == count {
                    stop
                } else {
                    start * (step * i as f64).exp()
                }
            })
            .collect())
    }
}

fn default_kappa() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub filter: FilterKind,
    pub theta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub selectors: Vec<Selector>,
    pub sigma: SigmaGrid,
    pub runs: usize,
    pub seed: u64,
    /// Tuning constant of the classical balancing rule.
    #[serde(default = "default_kappa")]
    pub lepskii_kappa: f64,
    /// Use exact data in every run.
    #[serde(default)]
    pub noise_free: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: ProblemSpec::antiderivative(),
            filter: FilterKind::Tikhonov,
            theta: 2.0,
            beta: 1.0,
            gamma: 1.0,
            selectors: Selector::ALL.to_vec(),
            sigma: SigmaGrid::new(3e-2, 1e-5, 8),
            runs: 200,
            seed: 42,
            lepskii_kappa: 1.0,
            noise_free: false,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 1.0 && self.theta.is_finite()) {
            return Err(Error::Config(format!("theta must exceed 1, got {}", self.theta)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if !(self.lepskii_kappa >= 1.0) {
            return Err(Error::Config(format!(
                "lepskii kappa must be at least 1, got {}",
                self.lepskii_kappa
            )));
        }
        let mut seen = self.selectors.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.selectors.len() {
            return Err(Error::Config("duplicate selector".into()));
        }
        self.sigma.values()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorSummary {
    pub selector: Selector,
    pub mse: f64,
    pub stderr: f64,
    /// Counts of selected indices `0..=m_max`.
    pub histogram: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaResult {
    pub sigma: f64,
    pub grid: CandidateGrid,
    pub m_star: usize,
    pub m_double_star: usize,
    /// Monte Carlo mean of `‖f̂_{m*} − f†‖²` and its standard error.
    pub r_mstar: f64,
    pub r_mstar_stderr: f64,
    pub c1: f64,
    pub c2: f64,
    pub poa: f64,
    pub selectors: Vec<SelectorSummary>,
}

impl SigmaResult {
    pub fn summary(&self, selector: Selector) -> Option<&SelectorSummary> {
        self.selectors.iter().find(|s| s.selector == selector)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub cells: Vec<SigmaResult>,
}

impl ExperimentResult {
    pub fn sigmas(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.sigma).collect()
    }

    /// MSE series of one selector over the σ grid.
    pub fn mse_series(&self, selector: Selector) -> Option<Vec<f64>> {
        self.cells.iter().map(|c| c.summary(selector).map(|s| s.mse)).collect()
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Mean and standard error of the mean.
fn mean_stderr(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let mut n = 0usize;
    let mut acc = CompensatedSum::default();
    for v in values.clone() {
        acc.add(v);
        n += 1;
    }
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = acc.total() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let mut dev = CompensatedSum::default();
    for v in values {
        dev.add((v - mean) * (v - mean));
    }
    let var = dev.total() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Everything shared by the runs at one noise level.
struct SigmaContext<'a> {
    problem: &'a SpectralProblem,
    grid: CandidateGrid,
    thresholds: Option<ThresholdTable>,
    multipliers: Vec<Vec<f64>>,
    m_star: usize,
}

struct RunOutcome {
    indices: Vec<usize>,
    errors: Vec<f64>,
    error_at_mstar: f64,
}

fn stream_id(sigma_index: usize, run: usize) -> u64 {
    ((sigma_index as u64) << 32) | run as u64
}

fn single_run(ctx: &SigmaContext<'_>, config: &ExperimentConfig, sigma_index: usize, run: usize) -> Result<RunOutcome> {
    let problem = ctx.problem;
    let sigma = ctx.grid.sigma;
    let y: Vec<f64> = if config.noise_free {
        problem.data_truth().to_vec()
    } else {
        let mut rng = noise_rng(config.seed, stream_id(sigma_index, run));
        problem
            .data_truth()
            .iter()
            .map(|g| {
                let e: f64 = rng.sample(StandardNormal);
                g + sigma * e
            })
            .collect()
    };
    let estimates: Vec<Vec<f64>> = ctx
        .multipliers
        .iter()
        .map(|w| w.iter().zip(&y).map(|(w, y)| w * y).collect())
        .collect();
    let errors: Vec<f64> = estimates.iter().map(|f| squared_distance(f, problem.truth())).collect();
    if let Some(m) = errors.iter().position(|e| !e.is_finite()) {
        return Err(Error::Run {
            sigma_index,
            run,
            message: format!("non-finite error at candidate {m}"),
        });
    }
    let distance = |m1: usize, m2: usize| squared_distance(&estimates[m1], &estimates[m2]).sqrt();
    let indices: Vec<usize> = config
        .selectors
        .iter()
        .map(|sel| match sel {
            Selector::Solit => solit_select_by(
                ctx.thresholds
                    .as_ref()
                    .expect("thresholds built when SOLIT is requested"),
                distance,
            ),
            Selector::Lepskii => lepskii_select_by(&ctx.grid, config.lepskii_kappa, distance),
            Selector::Oracle => ctx.m_star,
            Selector::Optimal => optimal_select(&errors),
            Selector::NoiseLevel => noise_level_select(&ctx.grid, sigma),
        })
        .collect();
    Ok(RunOutcome {
        errors: indices.iter().map(|&m| errors[m]).collect(),
        indices,
        error_at_mstar: errors[ctx.m_star],
    })
}

/// Runs the full experiment; deterministic for a given configuration.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let problem = config.problem.build()?;
    run_experiment_on(config, &problem)
}

/// As [`run_experiment`] with a prebuilt problem.
pub fn run_experiment_on(config: &ExperimentConfig, problem: &SpectralProblem) -> Result<ExperimentResult> {
    config.validate()?;
    let spec = FilterSpec::for_spectrum(config.filter, problem.lambda_max())?;
    let sigmas = config.sigma.values()?;
    let mut cells = Vec::with_capacity(sigmas.len());
    for (sigma_index, &sigma) in sigmas.iter().enumerate() {
        cells.push(run_sigma(config, problem, &spec, sigma_index, sigma)?);
    }
    Ok(ExperimentResult {
        config: config.clone(),
        cells,
    })
}

fn run_sigma(
    config: &ExperimentConfig,
    problem: &SpectralProblem,
    spec: &FilterSpec,
    sigma_index: usize,
    sigma: f64,
) -> Result<SigmaResult> {
    let grid = build_grid(problem, spec, sigma, config.theta)?;
    let thresholds = if config.selectors.contains(&Selector::Solit) {
        Some(build_thresholds(problem, spec, &grid, config.beta, config.gamma)?)
    } else {
        None
    };
    let det = DeterministicTables::compute(problem, spec, &grid);
    let m_star = det.oracle_index(config.beta);
    let m_ss = m_double_star(&det.bias, &grid.v, grid.theta1, config.beta);
    let constants = oracle_constants(&grid, m_star, det.u[m_star], config.beta, config.gamma)?;
    let multipliers = grid
        .alphas
        .iter()
        .map(|&a| problem.multipliers_unchecked(spec, a))
        .collect();
    let ctx = SigmaContext {
        problem,
        grid,
        thresholds,
        multipliers,
        m_star,
    };
    let outcomes: Vec<RunOutcome> = (0..config.runs)
        .into_par_iter()
        .map(|run| single_run(&ctx, config, sigma_index, run))
        .collect::<Result<_>>()?;

    let size = ctx.grid.len();
    let selectors = config
        .selectors
        .iter()
        .enumerate()
        .map(|(i, &selector)| {
            let (mse, stderr) = mean_stderr(outcomes.iter().map(|o| o.errors[i]));
            let mut histogram = vec![0u64; size];
            for o in &outcomes {
                histogram[o.indices[i]] += 1;
            }
            SelectorSummary {
                selector,
                mse,
                stderr,
                histogram,
            }
        })
        .collect();
    let (r_mstar, r_mstar_stderr) = mean_stderr(outcomes.iter().map(|o| o.error_at_mstar));
    Ok(SigmaResult {
        sigma,
        grid: ctx.grid,
        m_star,
        m_double_star: m_ss,
        r_mstar,
        r_mstar_stderr,
        c1: constants.c1,
        c2: constants.c2,
        poa: price_of_adaptation(r_mstar, constants.c2),
        selectors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateModel {
    /// `log MSE` against `log σ`.
    Poly,
    /// `log MSE` against `log(−log σ)`.
    Log,
}

impl std::str::FromStr for RateModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "poly" => Ok(RateModel::Poly),
            "log" => Ok(RateModel::Log),
            other => Err(Error::Parse(format!("unknown rate model '{other}' (poly | log)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Least-squares line through the transformed points.
pub fn fit_rate(sigmas: &[f64], mse: &[f64], model: RateModel) -> Result<RateFit> {
    crate::error::check_len(sigmas.len(), mse.len())?;
    if sigmas.len() < 3 {
        return Err(Error::invalid(format!("need at least 3 points, got {}", sigmas.len())));
    }
    if let Some(bad) = sigmas.iter().chain(mse).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::invalid(format!("rate fit needs positive values, got {bad}")));
    }
    let xs: Vec<f64> = match model {
        RateModel::Poly => sigmas.iter().map(|s| s.ln()).collect(),
        RateModel::Log => {
            if let Some(bad) = sigmas.iter().find(|&&s| s >= 1.0) {
                return Err(Error::invalid(format!("log model needs σ < 1, got {bad}")));
            }
            sigmas.iter().map(|s| (-s.ln()).ln()).collect()
        }
    };
    let ys: Vec<f64> = mse.iter().map(|m| m.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("rate fit needs distinct noise levels"));
    }
    let slope = sxy / sxx;
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub sigma: f64,
    pub mse: f64,
    pub bound: f64,
    /// Three combined standard errors.
    pub slack: f64,
    /// `bound + slack − mse`; negative on violation.
    pub margin: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub cells: Vec<OracleCheck>,
}

impl OracleReport {
    pub fn all_passed(&self) -> bool {
        self.cells.iter().all(|c| c.passed)
    }

    pub fn violations(&self) -> impl Iterator<Item = &OracleCheck> {
        self.cells.iter().filter(|c| !c.passed)
    }
}

fn oracle_bound(c1: f64, c2: f64, r: f64) -> f64 {
    c1 * r + price_of_adaptation(r, c2)
}

/// Checks `MSE(SOLIT) ≤ C₁ R_{m*} + (√R_{m*} + C₂)²` per noise level, up to
/// three combined standard errors. The uncertainty of `R_{m*}` enters through
/// the change of the bound over one standard error.
pub fn verify_oracle_inequality(result: &ExperimentResult) -> Result<OracleReport> {
    let mut cells = Vec::with_capacity(result.cells.len());
    for cell in &result.cells {
        let solit = cell
            .summary(Selector::Solit)
            .ok_or_else(|| Error::Config("oracle inequality needs SOLIT results".into()))?;
        if !cell.c2.is_finite() || !cell.c1.is_finite() {
            cells.push(OracleCheck {
                sigma: cell.sigma,
                mse: solit.mse,
                bound: f64::INFINITY,
                slack: 0.0,
                margin: f64::INFINITY,
                passed: true,
            });
            continue;
        }
        let bound = oracle_bound(cell.c1, cell.c2, cell.r_mstar);
        let bound_shift = oracle_bound(cell.c1, cell.c2, cell.r_mstar + cell.r_mstar_stderr) - bound;
        let slack = 3.0 * (solit.stderr.powi(2) + bound_shift.powi(2)).sqrt();
        let margin = bound + slack - solit.mse;
        cells.push(OracleCheck {
            sigma: cell.sigma,
            mse: solit.mse,
            bound,
            slack,
            margin,
            passed: margin >= 0.0,
        });
    }
    Ok(OracleReport { cells })
}

/// Approximate against Monte Carlo tail quantile for one grid pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileComparison {
    pub m1: usize,
    pub m2: usize,
    pub p: f64,
    pub ltz: f64,
    pub mc: f64,
    pub rel_err: f64,
}

/// Compares quantiles of `‖ε_{α_m} − ε_{α_{m+1}}‖²` for every adjacent grid
/// pair at tail probabilities `probs`.
pub fn quantile_fidelity(
    problem: &SpectralProblem,
    spec: &FilterSpec,
    grid: &CandidateGrid,
    probs: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<QuantileComparison>> {
    if let Some(bad) = probs.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::invalid(format!(
            "tail probability must lie in (0, 1), got {bad}"
        )));
    }
    let rows: Vec<Vec<QuantileComparison>> = (0..grid.m_max())
        .into_par_iter()
        .map(|m1| {
            let m2 = m1 + 1;
            let w = WeightVector::new(pair_weights(problem, spec, grid.alphas[m1], grid.alphas[m2]))?;
            let cumulants = cumulant_traces(&w);
            let mc = mc_tail_quantiles(&w, probs, samples, seed.wrapping_add(m1 as u64));
            probs
                .iter()
                .zip(mc)
                .map(|(&p, mc)| {
                    let ltz = ltz_tail_quantile(&cumulants, p)?;
                    Ok(QuantileComparison {
                        m1,
                        m2,
                        p,
                        ltz,
                        mc,
                        rel_err: (ltz - mc).abs() / mc,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}
