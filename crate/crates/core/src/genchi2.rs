//! Generalized χ² variables `Z = Σ a_i ε_i²` with `ε_i` i.i.d. standard
//! normal.
//!
//! Tail probabilities are approximated by a noncentral χ² matching the
//! first four cumulants (Liu, Tang & Zhang, 2009). Monte Carlo sampling is
//! provided as an independent reference.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::candidates::pair_weights;
use crate::error::{Error, Result};
use crate::filters::FilterSpec;
use crate::model::{noise_rng, SpectralProblem};

/// Nonnegative diagonal weights of a quadratic form in standard normals.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("empty weight vector"));
        }
        if let Some(bad) = weights.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
            return Err(Error::invalid(format!("weight {bad} is not a nonnegative number")));
        }
        Ok(WeightVector(weights))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_degenerate(&self) -> bool {
        self.0.iter().all(|&a| a == 0.0)
    }

    pub fn scaled(&self, c: f64) -> WeightVector {
        WeightVector(self.0.iter().map(|a| a * c).collect())
    }
}

/// Power sums `c_k = Σ a_i^k`, i.e. `trace(A^k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cumulants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

pub fn cumulant_traces(w: &WeightVector) -> Cumulants {
    let mut c = Cumulants {
        c1: 0.0,
        c2: 0.0,
        c3: 0.0,
        c4: 0.0,
    };
    for &a in w.as_slice() {
        let a2 = a * a;
        c.c1 += a;
        c.c2 += a2;
        c.c3 += a2 * a;
        c.c4 += a2 * a2;
    }
    c
}

const POISSON_TAIL: f64 = 1e-14;
const MAX_POISSON_TERMS: usize = 100_000;

/// `P(χ²_l(δ) > x)`.
pub fn noncentral_chi2_sf(l: f64, delta: f64, x: f64) -> Result<f64> {
    Ok(noncentral_chi2_ln_sf(l, delta, x)?.exp())
}

/// Natural log of `P(χ²_l(δ) > x)`, accurate deep into the tail.
///
/// Poisson mixture of central χ² tails summed outward from the Poisson
/// mode; each direction stops once a bound on the neglected mass falls
/// below `1e-14` of the accumulated sum.
pub fn noncentral_chi2_ln_sf(l: f64, delta: f64, x: f64) -> Result<f64> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::invalid(format!("degrees of freedom must be positive, got {l}")));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::invalid(format!(
            "noncentrality must be nonnegative, got {delta}"
        )));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::NEG_INFINITY);
    }
    let central = |dof: f64| gamma_ur(0.5 * dof, 0.5 * x);
    if delta == 0.0 {
        return Ok(central(l).ln());
    }

    let mu = 0.5 * delta;
    let ln_mu = mu.ln();
    let ln_poisson = |j: usize| -mu + j as f64 * ln_mu - ln_gamma(j as f64 + 1.0);
    let mode = mu.floor() as usize;

    // terms are scaled by exp(-ln_poisson(mode)) to survive large μ
    let ln_scale = ln_poisson(mode);
    let mut sum = 0.0;
    for j in (mode..).take(MAX_POISSON_TERMS) {
        let weight = (ln_poisson(j) - ln_scale).exp();
        sum += weight * central(l + 2.0 * j as f64);
        let next = j as f64 + 2.0;
        if next > mu {
            // Σ_{i>j} P_i ≤ P_{j+1} / (1 − μ/(j+2)), and each tail term is ≤ 1
            let bound = weight * mu / (j as f64 + 1.0) / (1.0 - mu / next);
            if bound < POISSON_TAIL * sum {
                break;
            }
        }
    }
    let mut j = mode;
    while j > 0 {
        j -= 1;
        let weight = (ln_poisson(j) - ln_scale).exp();
        let q = central(l + 2.0 * j as f64);
        sum += weight * q;
        let r = j as f64 / mu;
        // Σ_{i<j} P_i Q_i ≤ Q_j P_j r / (1 − r)
        if r < 1.0 && q * weight * r / (1.0 - r) < POISSON_TAIL * sum {
            break;
        }
    }
    Ok(sum.ln() + ln_scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LtzBranch {
    /// `s1² > s2`: noncentral χ² with `δ > 0`.
    Noncentral,
    /// `s1² ≤ s2`: central χ².
    Central,
    /// Skewness numerically zero; Gaussian tail.
    Gaussian,
}

/// Parameters of the matched noncentral χ².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LtzApprox {
    pub l: f64,
    pub delta: f64,
    pub a: f64,
    pub branch: LtzBranch,
    c1: f64,
    c2: f64,
}

const MIN_SKEWNESS: f64 = 1e-8;

impl LtzApprox {
    pub fn from_cumulants(c: &Cumulants) -> Result<Self> {
        if !(c.c2 > 0.0 && c.c2.is_finite()) {
            return Err(Error::invalid(format!("c2 must be positive, got {}", c.c2)));
        }
        let s1 = c.c3 / c.c2.powf(1.5);
        let s2 = c.c4 / (c.c2 * c.c2);
        let (l, delta, a, branch) = if !(s1 > MIN_SKEWNESS) {
            (f64::NAN, 0.0, f64::NAN, LtzBranch::Gaussian)
        } else if s1 * s1 > s2 {
            let a = 1.0 / (s1 - (s1 * s1 - s2).sqrt());
            let delta = s1 * a * a * a - a * a;
            (a * a - 2.0 * delta, delta, a, LtzBranch::Noncentral)
        } else {
            (c.c2.powi(3) / (c.c3 * c.c3), 0.0, 1.0 / s1, LtzBranch::Central)
        };
        let approx = LtzApprox {
            l,
            delta,
            a,
            branch,
            c1: c.c1,
            c2: c.c2,
        };
        if branch != LtzBranch::Gaussian && !(l > 0.0 && l.is_finite() && delta >= 0.0) {
            return Ok(LtzApprox {
                branch: LtzBranch::Gaussian,
                ..approx
            });
        }
        Ok(approx)
    }

    /// Standardized argument `(t − c1)/√(2 c2)`.
    fn standardized(&self, t: f64) -> f64 {
        (t - self.c1) / (2.0 * self.c2).sqrt()
    }

    /// Natural log of the approximate `P(Z > t)`.
    pub fn ln_sf(&self, t: f64) -> f64 {
        let z = self.standardized(t);
        match self.branch {
            LtzBranch::Gaussian => ln_normal_sf(z),
            _ => {
                let mapped = std::f64::consts::SQRT_2 * self.a * z + self.l + self.delta;
                noncentral_chi2_ln_sf(self.l, self.delta, mapped).expect("parameters validated at construction")
            }
        }
    }

    pub fn sf(&self, t: f64) -> f64 {
        self.ln_sf(t).exp()
    }

    /// `t` with `ln P(Z > t) = ln_p`, clamped to the support `[0, ∞)`.
    pub fn quantile_ln(&self, ln_p: f64) -> f64 {
        if ln_p >= 0.0 {
            return 0.0;
        }
        if self.branch == LtzBranch::Gaussian {
            let z = inverse_normal_sf_ln(ln_p);
            return (self.c1 + (2.0 * self.c2).sqrt() * z).max(0.0);
        }
        if self.ln_sf(0.0) <= ln_p {
            return 0.0;
        }
        // √c2 bounds the largest weight from above
        let spread = 20.0 * (2.0 * self.c2).sqrt() + 20.0 * self.c2.sqrt();
        let mut hi = self.c1 + spread.max(f64::MIN_POSITIVE);
        let mut guard = 0;
        while self.ln_sf(hi) > ln_p && guard < 2000 {
            hi = self.c1 + 2.0 * (hi - self.c1);
            guard += 1;
        }
        let mut lo = 0.0;
        for _ in 0..400 {
            if hi - lo <= QUANTILE_RTOL * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.ln_sf(mid) > ln_p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

const QUANTILE_RTOL: f64 = 1e-10;

fn ln_normal_sf(z: f64) -> f64 {
    let p = 0.5 * statrs::function::erf::erfc(z / std::f64::consts::SQRT_2);
    if p > 1e-300 {
        p.ln()
    } else {
        // Mills ratio asymptotics
        -0.5 * z * z - z.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }
}

fn inverse_normal_sf_ln(ln_p: f64) -> f64 {
    let p = ln_p.exp();
    if p > 1e-300 {
        let normal = Normal::standard();
        return -normal.inverse_cdf(p);
    }
    // solve the asymptotic form by fixed-point iteration
    let mut z = (-2.0 * ln_p).sqrt();
    for _ in 0..50 {
        z = (-2.0 * (ln_p + z.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln())).sqrt();
    }
    z
}

pub fn ltz_tail_sf(c: &Cumulants, t: f64) -> Result<f64> {
    Ok(LtzApprox::from_cumulants(c)?.sf(t))
}

pub fn ltz_tail_quantile(c: &Cumulants, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("tail probability must lie in (0, 1), got {p}")));
    }
    ltz_tail_quantile_ln(c, p.ln())
}

/// Quantile for tail probability `exp(ln_p)`; usable where `p` itself would
/// underflow.
pub fn ltz_tail_quantile_ln(c: &Cumulants, ln_p: f64) -> Result<f64> {
    if !(ln_p <= 0.0) {
        return Err(Error::invalid(format!("log tail probability must be ≤ 0, got {ln_p}")));
    }
    Ok(LtzApprox::from_cumulants(c)?.quantile_ln(ln_p))
}

/// Leading weights drawn exactly must carry all but this share of `c1`.
const MC_TAIL_SHARE: f64 = 1e-6;

/// Sampler for `Z`. Weights are sorted; the smallest ones whose total is
/// below `1e-6 · c1` are merged into one moment-matched scaled χ²
/// (Satterthwaite), which leaves quantiles unchanged far below Monte Carlo
/// resolution.
struct QuadraticFormSampler {
    leading: Vec<f64>,
    remainder: Option<(f64, ChiSquared<f64>)>,
}

impl QuadraticFormSampler {
    fn new(w: &WeightVector) -> Self {
        let mut sorted: Vec<f64> = w.as_slice().iter().copied().filter(|&a| a > 0.0).collect();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let total: f64 = sorted.iter().sum();
        let mut rest = total;
        let mut keep = sorted.len();
        for (i, a) in sorted.iter().enumerate() {
            if rest <= MC_TAIL_SHARE * total {
                keep = i;
                break;
            }
            rest -= a;
        }
        let tail = &sorted[keep..];
        let r1: f64 = tail.iter().sum();
        let r2: f64 = tail.iter().map(|a| a * a).sum();
        let remainder = if r1 > 0.0 && r2 > 0.0 {
            ChiSquared::new(r1 * r1 / r2).ok().map(|chi| (r2 / r1, chi))
        } else {
            None
        };
        sorted.truncate(keep);
        QuadraticFormSampler {
            leading: sorted,
            remainder,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut z = 0.0;
        for &a in &self.leading {
            let e: f64 = rng.sample(StandardNormal);
            z += a * e * e;
        }
        if let Some((scale, chi)) = &self.remainder {
            z += scale * chi.sample(rng);
        }
        z
    }
}

fn mc_draws(w: &WeightVector, samples: usize, seed: u64) -> Vec<f64> {
    let sampler = QuadraticFormSampler::new(w);
    let mut rng = noise_rng(seed, 0x9e37_79b9);
    (0..samples).map(|_| sampler.sample(&mut rng)).collect()
}

/// Monte Carlo upper-tail quantile with a ±3 standard error band taken
/// from binomial order statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McQuantile {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn mc_tail_quantile(w: &WeightVector, p: f64, samples: usize, seed: u64) -> f64 {
    mc_tail_quantile_interval(w, p, samples, seed).estimate
}

pub fn mc_tail_quantile_interval(w: &WeightVector, p: f64, samples: usize, seed: u64) -> McQuantile {
    let samples = samples.max(2);
    let mut draws = mc_draws(w, samples, seed);
    draws.sort_unstable_by(f64::total_cmp);
    let n = samples as f64;
    let pick = |q: f64| {
        let idx = (q * n).ceil() as isize - 1;
        draws[idx.clamp(0, samples as isize - 1) as usize]
    };
    let band = 3.0 * (p * (1.0 - p) / n).sqrt();
    McQuantile {
        estimate: pick(1.0 - p),
        lower: pick(1.0 - p - band),
        upper: pick(1.0 - p + band),
    }
}

/// Monte Carlo upper-tail quantiles for several probabilities from one
/// sample.
pub fn mc_tail_quantiles(w: &WeightVector, probs: &[f64], samples: usize, seed: u64) -> Vec<f64> {
    let samples = samples.max(1);
    let mut draws = mc_draws(w, samples, seed);
    draws.sort_unstable_by(f64::total_cmp);
    probs
        .iter()
        .map(|&p| {
            let idx = ((1.0 - p) * samples as f64).ceil() as isize - 1;
            draws[idx.clamp(0, samples as isize - 1) as usize]
        })
        .collect()
}

/// Monte Carlo `P(Z > t)` and its standard error.
pub fn mc_tail_sf(w: &WeightVector, t: f64, samples: usize, seed: u64) -> (f64, f64) {
    let samples = samples.max(1);
    let draws = mc_draws(w, samples, seed);
    let hits = draws.iter().filter(|&&z| z > t).count();
    let p = hits as f64 / samples as f64;
    (p, (p * (1.0 - p) / samples as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalValue {
    /// Threshold on the norm `‖ε_{α_a} − ε_{α_b}‖`.
    pub z: f64,
    /// The two filters coincide on the spectrum; `z` is then 0.
    pub degenerate: bool,
}

/// `z` with `P(‖ε_{α_a} − ε_{α_b}‖ > z) = e^{−x}`.
///
/// The squared norm is the generalized χ² with weights
/// `λ_i (q_{α_a}(λ_i) − q_{α_b}(λ_i))²`, so `z` is the square root of its
/// quantile.
pub fn critical_value_z(
    problem: &SpectralProblem,
    spec: &FilterSpec,
    alpha_a: f64,
    alpha_b: f64,
    x: f64,
) -> Result<CriticalValue> {
    problem.check_admissible(spec, alpha_a)?;
    problem.check_admissible(spec, alpha_b)?;
    let w = WeightVector::new(pair_weights(problem, spec, alpha_a, alpha_b))?;
    critical_value_from_weights(&w, x)
}

pub fn critical_value_from_weights(w: &WeightVector, x: f64) -> Result<CriticalValue> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::invalid(format!("x must be nonnegative, got {x}")));
    }
    if w.is_degenerate() {
        return Ok(CriticalValue {
            z: 0.0,
            degenerate: true,
        });
    }
    if x == 0.0 {
        return Ok(CriticalValue {
            z: 0.0,
            degenerate: false,
        });
    }
    let q = ltz_tail_quantile_ln(&cumulant_traces(w), -x)?;
    Ok(CriticalValue {
        z: q.sqrt(),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::erf::erfc;

    const CHI2_1_5PCT: f64 = 3.841_458_820_694_124;

    /// Independent oracle: P(χ²₁ > x) = erfc(√(x/2)).
    fn chi2_1_sf(x: f64) -> f64 {
        erfc((x / 2.0).sqrt())
    }

    /// Independent oracle for even degrees of freedom 2k:
    /// P(χ²_{2k} > x) = e^{−x/2} Σ_{j<k} (x/2)^j / j!
    fn chi2_even_sf(k: usize, x: f64) -> f64 {
        let h = x / 2.0;
        let mut term = 1.0;
        let mut sum = 0.0;
        for j in 0..k {
            if j > 0 {
                term *= h / j as f64;
            }
            sum += term;
        }
        (-h).exp() * sum
    }

    fn w(v: &[f64]) -> WeightVector {
        WeightVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn power_sums() {
        let c = cumulant_traces(&w(&[2.0, 1.0]));
        assert_eq!((c.c1, c.c2, c.c3, c.c4), (3.0, 5.0, 9.0, 17.0));
        let c = cumulant_traces(&w(&[1.0]));
        assert_eq!((c.c1, c.c2, c.c3, c.c4), (1.0, 1.0, 1.0, 1.0));
        let c = cumulant_traces(&w(&[0.5; 8]));
        assert_eq!((c.c1, c.c2, c.c3, c.c4), (4.0, 2.0, 1.0, 0.5));
    }

    #[test]
    fn weight_vector_validation() {
        assert!(WeightVector::new(vec![]).is_err());
        assert!(WeightVector::new(vec![1.0, -1e-3]).is_err());
        assert!(WeightVector::new(vec![0.0, 0.0]).unwrap().is_degenerate());
    }

    #[test]
    fn central_sf_matches_oracles() {
        let p = noncentral_chi2_sf(1.0, 0.0, CHI2_1_5PCT).unwrap();
        assert!((p - 0.05).abs() < 1e-12);
        for &x in &[0.1, 1.0, 4.0, 20.0, 80.0] {
            let p = noncentral_chi2_sf(1.0, 0.0, x).unwrap();
            assert!((p / chi2_1_sf(x) - 1.0).abs() < 1e-9, "x={x}");
            for k in 1..5 {
                let p = noncentral_chi2_sf(2.0 * k as f64, 0.0, x).unwrap();
                assert!((p / chi2_even_sf(k, x) - 1.0).abs() < 1e-9, "k={k} x={x}");
            }
        }
    }

    #[test]
    fn noncentral_sf_matches_series_oracle() {
        // δ > 0, l = 2: direct Poisson sum of closed-form even-dof tails
        let (l, delta) = (2.0, 3.0);
        for &x in &[0.5, 5.0, 15.0, 60.0] {
            let mu: f64 = delta / 2.0;
            let mut oracle = 0.0;
            let mut pj = (-mu).exp();
            for j in 0..200 {
                if j > 0 {
                    pj *= mu / j as f64;
                }
                oracle += pj * chi2_even_sf(1 + j, x);
            }
            let p = noncentral_chi2_sf(l, delta, x).unwrap();
            assert!((p / oracle - 1.0).abs() < 1e-9, "x={x}: {p} vs {oracle}");
        }
        // large noncentrality stays finite and ordered
        let a = noncentral_chi2_sf(3.0, 2000.0, 2000.0).unwrap();
        let b = noncentral_chi2_sf(3.0, 2000.0, 2200.0).unwrap();
        assert!(a > b && a < 1.0 && b > 0.0);
    }

    #[test]
    fn sf_support_and_continuity() {
        for &(l, d) in &[(1.0, 0.0), (3.5, 2.0), (10.0, 0.1)] {
            assert_eq!(noncentral_chi2_sf(l, d, 0.0).unwrap(), 1.0);
            assert_eq!(noncentral_chi2_sf(l, d, -3.0).unwrap(), 1.0);
        }
        for &l in &[1.0, 2.5, 7.0] {
            for &x in &[0.3, 2.0, 9.0] {
                let a = noncentral_chi2_sf(l, 1e-12, x).unwrap();
                let b = noncentral_chi2_sf(l, 0.0, x).unwrap();
                assert!((a - b).abs() <= 1e-10);
            }
        }
        assert!(noncentral_chi2_sf(0.0, 1.0, 1.0).is_err());
        assert!(noncentral_chi2_sf(-1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn deep_tail_keeps_relative_accuracy() {
        // P(χ²₁ > x) ≈ e^{-x/2} √(2/(π x)) for large x
        let x = 400.0;
        let ln_p = noncentral_chi2_ln_sf(1.0, 0.0, x).unwrap();
        let asym = -x / 2.0 + (2.0 / (std::f64::consts::PI * x)).ln() * 0.5 + (1.0 - 1.0 / x).ln();
        assert!((ln_p - asym).abs() < 1e-3, "{ln_p} vs {asym}");
        let ln_p = noncentral_chi2_ln_sf(4.0, 5.0, 300.0).unwrap();
        assert!(ln_p.is_finite() && ln_p < -100.0);
    }

    #[test]
    fn single_weight_reduces_to_chi2_1() {
        let c = cumulant_traces(&w(&[1.0]));
        let approx = LtzApprox::from_cumulants(&c).unwrap();
        assert_eq!(approx.branch, LtzBranch::Central);
        assert!((approx.l - 1.0).abs() < 1e-15 && approx.delta == 0.0 && (approx.a - 1.0).abs() < 1e-15);
        for &t in &[0.2, 1.0, 3.0, 10.0, 30.0] {
            let p = ltz_tail_sf(&c, t).unwrap();
            assert!((p / chi2_1_sf(t) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn equal_weights_are_exact() {
        for &(n, c) in &[(2usize, 0.5), (4, 3.0), (6, 1e-3)] {
            let cum = cumulant_traces(&w(&vec![c; n]));
            for &t in &[0.5, 1.0, 2.0, 4.0, 8.0] {
                let t = t * c * n as f64;
                let p = ltz_tail_sf(&cum, t).unwrap();
                let exact = chi2_even_sf(n / 2, t / c);
                assert!((p / exact - 1.0).abs() < 1e-8, "n={n} c={c} t={t}: {p} vs {exact}");
            }
        }
    }

    #[test]
    fn quantile_examples() {
        let c = cumulant_traces(&w(&[1.0]));
        let q = ltz_tail_quantile(&c, 0.05).unwrap();
        assert!((q - CHI2_1_5PCT).abs() < 1e-8);
        let q2 = ltz_tail_quantile_ln(&c, -(20.0f64).ln()).unwrap();
        assert!((q - q2).abs() < 1e-9);
        assert!(ltz_tail_quantile(&c, 0.0).is_err());
        assert!(ltz_tail_quantile(&c, 1.0).is_err());
    }

    #[test]
    fn quantile_round_trip() {
        let weights = [vec![2.0, 1.0], vec![5.0, 1.0, 0.1, 0.01], vec![1.0, 1.0, 1.0, 0.2]];
        for v in &weights {
            let c = cumulant_traces(&w(v));
            for &p in &[0.9, 0.5, 0.1, 1e-3, 1e-8] {
                let t = ltz_tail_quantile(&c, p).unwrap();
                let back = ltz_tail_sf(&c, t).unwrap();
                assert!((back - p).abs() <= 1e-8 * p.max(1e-8) + 1e-12, "{v:?} p={p}: {back}");
            }
        }
    }

    /// P(2X + Y > t) for X, Y ~ χ²₁ by substituting X = s², which makes the
    /// integrand smooth: 2 ∫_0^{√(t/2)} φ(s) P(χ²₁ > t − 2s²) ds + P(χ²₁ > t/2).
    fn two_weight_sf_exact(t: f64) -> f64 {
        let top = (t / 2.0).sqrt();
        let n = 20_000;
        let h = top / n as f64;
        let f = |s: f64| {
            let phi = (-0.5 * s * s).exp() / (2.0 * std::f64::consts::PI).sqrt();
            2.0 * phi * chi2_1_sf((t - 2.0 * s * s).max(0.0))
        };
        // composite Simpson
        let mut acc = f(0.0) + f(top);
        for i in 1..n {
            acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0 + chi2_1_sf(t / 2.0)
    }

    #[test]
    fn two_weights_against_exact_tail() {
        let wv = w(&[2.0, 1.0]);
        let exact = two_weight_sf_exact(10.0);
        assert!((exact - 0.040_054_871_614).abs() < 1e-7, "{exact}");
        let (mc, se) = mc_tail_sf(&wv, 10.0, 1_000_000, 17);
        assert!((mc - exact).abs() <= 3.0 * se, "mc {mc} exact {exact} se {se}");
        // the four-cumulant match lands on the central branch here and is
        // about 3% high at this level
        let c = cumulant_traces(&wv);
        assert_eq!(LtzApprox::from_cumulants(&c).unwrap().branch, LtzBranch::Central);
        let ltz = ltz_tail_sf(&c, 10.0).unwrap();
        assert!((ltz - 0.041_247_485_092_5).abs() < 1e-10, "{ltz}");
        assert!((ltz / exact - 1.0).abs() < 0.05);
    }

    #[test]
    fn monte_carlo_quantiles() {
        let wv = w(&[1.0]);
        let q = mc_tail_quantile_interval(&wv, 0.05, 1_000_000, 3);
        assert!((q.estimate - CHI2_1_5PCT).abs() < 0.03);
        assert!(q.lower <= CHI2_1_5PCT && CHI2_1_5PCT <= q.upper);
        // median of χ²₁ = 0.454936...
        let median = mc_tail_quantile(&wv, 0.5, 200_000, 4);
        assert!((median - 0.454_936_423_119_572_8).abs() < 0.01);
        assert_eq!(mc_tail_quantile(&wv, 0.5, 1000, 8), mc_tail_quantile(&wv, 0.5, 1000, 8));
        let both = mc_tail_quantiles(&wv, &[0.5, 0.05], 1000, 8);
        assert_eq!(both[0], mc_tail_quantile(&wv, 0.5, 1000, 8));
        assert_eq!(both[1], mc_tail_quantile(&wv, 0.05, 1000, 8));
    }

    #[test]
    fn doubling_samples_halves_quantile_variance() {
        let wv = w(&[1.0, 0.5]);
        let spread = |samples: usize| {
            let qs: Vec<f64> = (0..60).map(|s| mc_tail_quantile(&wv, 0.1, samples, 100 + s)).collect();
            let m = qs.iter().sum::<f64>() / qs.len() as f64;
            qs.iter().map(|q| (q - m).powi(2)).sum::<f64>() / (qs.len() - 1) as f64
        };
        let ratio = spread(4000) / spread(8000);
        assert!((1.2..3.5).contains(&ratio), "variance ratio {ratio}");
    }

    #[test]
    fn compressed_sampler_matches_full_mean() {
        let weights: Vec<f64> = (1..=3000).map(|k| (k as f64).powi(-4)).collect();
        let wv = w(&weights);
        let sampler = QuadraticFormSampler::new(&wv);
        assert!(sampler.leading.len() < 200);
        let draws = mc_draws(&wv, 200_000, 1);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let c1 = cumulant_traces(&wv).c1;
        assert!((mean / c1 - 1.0).abs() < 0.01);
    }

    #[test]
    fn critical_value_examples() {
        let cv = critical_value_from_weights(&w(&[1.0]), (20.0f64).ln()).unwrap();
        assert!((cv.z - 1.959_963_984_540_054).abs() < 1e-8);
        let cv = critical_value_from_weights(&w(&[1.0, 0.3]), 0.0).unwrap();
        assert_eq!(cv.z, 0.0);
        let cv = critical_value_from_weights(&w(&[0.0, 0.0]), 2.0).unwrap();
        assert!(cv.degenerate && cv.z == 0.0);
        assert!(critical_value_from_weights(&w(&[1.0]), -1.0).is_err());

        // one active eigenvalue: filters agree except at λ = 1/4
        let p = SpectralProblem::new("two", vec![1.0, 0.25], vec![0.0; 2], vec![0.0; 2]).unwrap();
        let cv = critical_value_z(&p, &FilterSpec::spectral_cutoff(), 1.0, 0.25, (20.0f64).ln()).unwrap();
        // weight 1/λ = 4 → z = 2 · 1.959964
        assert!((cv.z - 2.0 * 1.959_963_984_540_054).abs() < 1e-7);
    }

    #[test]
    fn scale_equivariance() {
        let base = w(&[3.0, 1.0, 0.4, 0.05]);
        for &c in &[1e-6, 0.3, 7.0, 1e5] {
            let scaled = base.scaled(c);
            for &p in &[0.3, 0.01, 1e-6] {
                let q0 = ltz_tail_quantile(&cumulant_traces(&base), p).unwrap();
                let q1 = ltz_tail_quantile(&cumulant_traces(&scaled), p).unwrap();
                assert!((q1 / (c * q0) - 1.0).abs() < 1e-8);
            }
            let z0 = critical_value_from_weights(&base, 3.0).unwrap().z;
            let z1 = critical_value_from_weights(&scaled, 3.0).unwrap().z;
            assert!((z1 / (c.sqrt() * z0) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn sf_monotone_in_t() {
        let c = cumulant_traces(&w(&[4.0, 1.0, 1.0, 0.3, 0.01]));
        let mut prev = 1.0;
        for i in 0..400 {
            let p = ltz_tail_sf(&c, 0.1 * i as f64).unwrap();
            assert!((0.0..=1.0).contains(&p));
            assert!(p <= prev + 1e-15);
            prev = p;
        }
    }
}
