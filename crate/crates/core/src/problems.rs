//! Benchmark problems with exact spectra, exact solutions, and exact data
//! obtained by projecting closed-form forward images.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SpectralProblem;
use crate::quadrature::GaussLegendre;

const NODES: usize = 64;

pub const ANTIDERIVATIVE_N: usize = 2000;
pub const GRADIOMETRY_N: usize = 129;
pub const GRADIOMETRY_RADIUS: f64 = 2.0;
/// Terms kept in the closed-form gradiometry data series.
pub const GRADIOMETRY_SERIES_TERMS: usize = 128;
pub const HEAT_N: usize = 40;
pub const HEAT_TIME: f64 = 0.1;

/// `λ_k = (kπ)^{-4}`.
pub fn antiderivative_eigenvalue(k: usize) -> f64 {
    (k as f64 * PI).powi(-4)
}

/// Hat function `x` on `[0, ½]`, `1 − x` on `[½, 1]`.
pub fn antiderivative_truth_fn(x: f64) -> f64 {
    if x <= 0.5 {
        x
    } else {
        1.0 - x
    }
}

/// Forward image of the hat function: `g'' = −f`, `g(0) = g(1) = 0`.
pub fn antiderivative_data_fn(x: f64) -> f64 {
    if x <= 0.5 {
        -x * (4.0 * x * x - 3.0) / 24.0
    } else {
        (x - 1.0) * (4.0 * x * x - 8.0 * x + 1.0) / 24.0
    }
}

/// Coefficient of the hat function on `√2 sin(kπx)`.
pub fn antiderivative_truth_coefficient(k: usize) -> f64 {
    let kpi = k as f64 * PI;
    match k % 4 {
        1 => 2.0 * SQRT_2 / (kpi * kpi),
        3 => -2.0 * SQRT_2 / (kpi * kpi),
        _ => 0.0,
    }
}

/// Sine basis `√2 sin(kπx)` on `[0, 1]`, `k = 1..=n`.
pub fn antiderivative_problem(n: usize) -> Result<SpectralProblem> {
    if n < 8 {
        return Err(Error::invalid(format!("antiderivative needs n ≥ 8, got {n}")));
    }
    let gl = GaussLegendre::new(NODES);
    let mut eig = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n);
    for k in 1..=n {
        let freq = k as f64 * PI;
        let panels = k.div_ceil(16);
        let integrand = |x: f64| antiderivative_data_fn(x) * SQRT_2 * (freq * x).sin();
        let g = gl.integrate(0.0, 0.5, panels, integrand) + gl.integrate(0.5, 1.0, panels, integrand);
        eig.push(antiderivative_eigenvalue(k));
        truth.push(antiderivative_truth_coefficient(k));
        data.push(g);
    }
    SpectralProblem::new("antiderivative", eig, truth, data)
}

/// `λ_k = k²(k+1)² R^{−2k−4}`.
pub fn gradiometry_eigenvalue(k: usize, radius: f64) -> f64 {
    let k = k as f64;
    (k * (k + 1.0)).powi(2) * radius.powf(-2.0 * k - 4.0)
}

/// Coefficient of `π/2 − |x|` on the orthonormal `cos(kx)/√π`.
pub fn tent_cos_coefficient(k: usize) -> f64 {
    if k % 2 == 1 {
        4.0 / (PI.sqrt() * (k * k) as f64)
    } else {
        0.0
    }
}

/// Coefficient of `cos((2m+1)x)` in the closed-form gradiometry data.
pub fn gradiometry_series_coefficient(m: usize, radius: f64) -> f64 {
    let k = (2 * m + 1) as f64;
    4.0 / PI * (1.0 + 1.0 / k) * radius.powf(-k - 2.0)
}

pub fn gradiometry_data_fn(x: f64, radius: f64, terms: usize) -> f64 {
    (0..=terms)
        .map(|m| gradiometry_series_coefficient(m, radius) * ((2 * m + 1) as f64 * x).cos())
        .sum()
}

/// Trigonometric modes on `[−π, π]` as (eigenvalue, truth, data) triples,
/// sorted by decreasing eigenvalue.
fn periodic_problem(
    label: &str,
    n: usize,
    with_constant: bool,
    eigenvalue: impl Fn(usize) -> f64,
    data_fn: impl Fn(f64) -> f64,
    max_frequency: usize,
) -> Result<SpectralProblem> {
    let gl = GaussLegendre::new(NODES);
    // a few oscillations of the highest frequency per panel on each side of the kink
    let panels = max_frequency.max(n).div_ceil(8).max(1);
    let (mut xs, mut ws) = gl.composite(-PI, 0.0, panels);
    let (xr, wr) = gl.composite(0.0, PI, panels);
    xs.extend(xr);
    ws.extend(wr);
    let g: Vec<f64> = xs.iter().map(|&x| data_fn(x)).collect();
    let project =
        |basis: &dyn Fn(f64) -> f64| -> f64 { xs.iter().zip(&ws).zip(&g).map(|((&x, w), gx)| w * gx * basis(x)).sum() };
    let norm = 1.0 / PI.sqrt();
    let mut modes: Vec<(f64, f64, f64)> = Vec::with_capacity(2 * n + 1);
    if with_constant {
        let c = 1.0 / (2.0 * PI).sqrt();
        modes.push((eigenvalue(0), 0.0, project(&|_| c)));
    }
    for k in 1..=n {
        let kf = k as f64;
        let lambda = eigenvalue(k);
        modes.push((lambda, tent_cos_coefficient(k), project(&|x| norm * (kf * x).cos())));
        modes.push((lambda, 0.0, project(&|x| norm * (kf * x).sin())));
    }
    modes.sort_by(|a, b| b.0.total_cmp(&a.0));
    if let Some(bad) = modes.iter().find(|m| !(m.0 > 0.0)) {
        return Err(Error::InvalidProblem(format!(
            "{label}: eigenvalue {:e} underflows at n = {n}; reduce the truncation",
            bad.0
        )));
    }
    SpectralProblem::new(
        label,
        modes.iter().map(|m| m.0).collect(),
        modes.iter().map(|m| m.1).collect(),
        modes.iter().map(|m| m.2).collect(),
    )
}

/// Fourier modes `±1..=±n`; the mean is not identifiable and is dropped.
pub fn gradiometry_problem(n: usize, radius: f64) -> Result<SpectralProblem> {
    if n < 2 {
        return Err(Error::invalid(format!("gradiometry needs n ≥ 2, got {n}")));
    }
    if !(radius > 1.0 && radius.is_finite()) {
        return Err(Error::invalid(format!("radius must exceed 1, got {radius}")));
    }
    let terms = GRADIOMETRY_SERIES_TERMS;
    periodic_problem(
        "gradiometry",
        n,
        false,
        |k| gradiometry_eigenvalue(k, radius),
        |x| gradiometry_data_fn(x, radius, terms),
        2 * terms + 1,
    )
}

/// `λ_k = exp(−2k² t̄)`.
pub fn heat_eigenvalue(k: usize, t_bar: f64) -> f64 {
    (-2.0 * (k * k) as f64 * t_bar).exp()
}

/// Heat flow of the tent function at time `t̄`, series cut at `terms`.
pub fn heat_data_fn(x: f64, t_bar: f64, terms: usize) -> f64 {
    (1..=terms)
        .step_by(2)
        .map(|k| {
            let kf = k as f64;
            (-kf * kf * t_bar).exp() * tent_cos_coefficient(k) * (kf * x).cos() / PI.sqrt()
        })
        .sum()
}

/// Constant mode plus Fourier modes `±1..=±n`.
pub fn heat_problem(n: usize, t_bar: f64) -> Result<SpectralProblem> {
    if n < 2 {
        return Err(Error::invalid(format!("heat needs n ≥ 2, got {n}")));
    }
    if !(t_bar > 0.0 && t_bar.is_finite()) {
        return Err(Error::invalid(format!("t̄ must be positive, got {t_bar}")));
    }
    let terms = 4 * n;
    periodic_problem(
        "heat",
        n,
        true,
        |k| heat_eigenvalue(k, t_bar),
        |x| heat_data_fn(x, t_bar, terms),
        terms,
    )
}

fn default_antiderivative_n() -> usize {
    ANTIDERIVATIVE_N
}
fn default_gradiometry_n() -> usize {
    GRADIOMETRY_N
}
fn default_radius() -> f64 {
    GRADIOMETRY_RADIUS
}
fn default_heat_n() -> usize {
    HEAT_N
}
fn default_time() -> f64 {
    HEAT_TIME
}

/// A benchmark and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemSpec {
    Antiderivative {
        #[serde(default = "default_antiderivative_n")]
        n: usize,
    },
    Gradiometry {
        #[serde(default = "default_gradiometry_n")]
        n: usize,
        #[serde(default = "default_radius")]
        radius: f64,
    },
    Heat {
        #[serde(default = "default_heat_n")]
        n: usize,
        #[serde(default = "default_time")]
        t_bar: f64,
    },
}

impl ProblemSpec {
    pub const NAMES: [&'static str; 3] = ["antiderivative", "gradiometry", "heat"];

    pub fn antiderivative() -> Self {
        ProblemSpec::Antiderivative { n: ANTIDERIVATIVE_N }
    }

    pub fn gradiometry() -> Self {
        ProblemSpec::Gradiometry {
            n: GRADIOMETRY_N,
            radius: GRADIOMETRY_RADIUS,
        }
    }

    pub fn heat() -> Self {
        ProblemSpec::Heat {
            n: HEAT_N,
            t_bar: HEAT_TIME,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::Antiderivative { .. } => "antiderivative",
            ProblemSpec::Gradiometry { .. } => "gradiometry",
            ProblemSpec::Heat { .. } => "heat",
        }
    }

    pub fn n(&self) -> usize {
        match *self {
            ProblemSpec::Antiderivative { n } | ProblemSpec::Gradiometry { n, .. } | ProblemSpec::Heat { n, .. } => n,
        }
    }

    pub fn with_n(mut self, value: usize) -> Self {
        match &mut self {
            ProblemSpec::Antiderivative { n } | ProblemSpec::Gradiometry { n, .. } | ProblemSpec::Heat { n, .. } => {
                *n = value
            }
        }
        self
    }

    pub fn build(&self) -> Result<SpectralProblem> {
        match *self {
            ProblemSpec::Antiderivative { n } => antiderivative_problem(n),
            ProblemSpec::Gradiometry { n, radius } => gradiometry_problem(n, radius),
            ProblemSpec::Heat { n, t_bar } => heat_problem(n, t_bar),
        }
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemSpec {
    type Err = Error;

    /// Problem by name with default parameters.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "antiderivative" => Ok(ProblemSpec::antiderivative()),
            "gradiometry" => Ok(ProblemSpec::gradiometry()),
            "heat" => Ok(ProblemSpec::heat()),
            other => Err(Error::Parse(format!(
                "unknown problem '{other}' (expected one of {})",
                ProblemSpec::NAMES.join(", ")
            ))),
        }
    }
}
