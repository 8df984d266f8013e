//! Benchmark acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use solit::filters::{validate_ordered_filter, FilterSpec};
use solit::genchi2::{cumulant_traces, ltz_tail_sf, WeightVector};
use solit::harness::{fit_rate, quantile_fidelity, verify_oracle_inequality, RateModel};
use solit::results::{read_results, result_rows, write_results};
use solit::selectors::{lepskii_select, oracle_select, solit_select, ThresholdTable};
use solit::{
    build_grid, run_experiment, ExperimentConfig, ExperimentResult, FilterKind, PairTable, ProblemSpec, Selector,
    SigmaGrid, SpectralProblem,
};

const FILTERS: [FilterKind; 3] = [FilterKind::Tikhonov, FilterKind::Showalter, FilterKind::SpectralCutoff];

struct Bench {
    problem: ProblemSpec,
    built: SpectralProblem,
    sigma: SigmaGrid,
    /// One experiment per entry of `FILTERS`.
    runs: Vec<(FilterKind, ExperimentResult, f64)>,
}

impl Bench {
    fn result(&self, kind: FilterKind) -> &ExperimentResult {
        &self.runs.iter().find(|(k, _, _)| *k == kind).expect("filter was run").1
    }

    fn elapsed(&self, kind: FilterKind) -> f64 {
        self.runs.iter().find(|(k, _, _)| *k == kind).expect("filter was run").2
    }
}

struct Line {
    id: usize,
    pass: bool,
    text: String,
}

fn run_benches() -> Vec<Bench> {
    let setups = [
        (ProblemSpec::antiderivative(), SigmaGrid::new(3e-2, 1e-5, 8)),
        (ProblemSpec::gradiometry(), SigmaGrid::new(1e-2, 1e-8, 8)),
        (ProblemSpec::heat(), SigmaGrid::new(1e-2, 1e-8, 8)),
    ];
    setups
        .into_iter()
        .map(|(problem, sigma)| {
            let built = problem.build().expect("benchmark problem builds");
            let runs = FILTERS
                .iter()
                .map(|&filter| {
                    let config = ExperimentConfig {
                        problem,
                        filter,
                        theta: 2.0,
                        beta: 1.0,
                        gamma: 1.0,
                        selectors: Selector::ALL.to_vec(),
                        sigma,
                        runs: 200,
                        seed: 42,
                        ..ExperimentConfig::default()
                    };
                    let start = Instant::now();
                    let result = run_experiment(&config).expect("experiment runs");
                    (filter, result, start.elapsed().as_secs_f64())
                })
                .collect();
            Bench {
                problem,
                built,
                sigma,
                runs,
            }
        })
        .collect()
}

fn rate_line(id: usize, bench: &Bench, model: RateModel, lo: f64, hi: f64) -> Line {
    let res = bench.result(FilterKind::Tikhonov);
    let mse = res.mse_series(Selector::Solit).expect("SOLIT was run");
    let fit = fit_rate(&res.sigmas(), &mse, model).expect("rate fit");
    let optimal = fit_rate(&res.sigmas(), &res.mse_series(Selector::Optimal).unwrap(), model).unwrap();
    let mut pass = fit.slope >= lo && fit.slope <= hi;
    let mut text = format!(
        "{} rate: {:?} slope {:.3} in [{lo}, {hi}] (optimal choice {:.3})",
        bench.problem.name(),
        model,
        fit.slope,
        optimal.slope
    );
    if id == 1 {
        let secs = bench.elapsed(FilterKind::Tikhonov);
        pass &= secs < 300.0;
        text.push_str(&format!(", runtime {secs:.1}s < 300s"));
    }
    Line { id, pass, text }
}

fn oracle_line(benches: &[Bench]) -> Line {
    let mut total = 0;
    let mut failed = Vec::new();
    for b in benches {
        for (kind, res, _) in &b.runs {
            let report = verify_oracle_inequality(res).expect("SOLIT was run");
            total += report.cells.len();
            for v in report.violations() {
                failed.push(format!("{}/{}/σ={:.1e}", b.problem.name(), kind.name(), v.sigma));
            }
        }
    }
    Line {
        id: 4,
        pass: failed.is_empty(),
        text: format!(
            "oracle inequality: {}/{total} cells hold {failed:?}",
            total - failed.len()
        ),
    }
}

fn near_oracle_line(benches: &[Bench]) -> Line {
    let mut pass = true;
    let mut parts = Vec::new();
    for b in benches {
        let res = b.result(FilterKind::Tikhonov);
        let solit = res.mse_series(Selector::Solit).unwrap();
        let optimal = res.mse_series(Selector::Optimal).unwrap();
        let mut ratios: Vec<f64> = solit.iter().zip(&optimal).map(|(s, o)| s / o).collect();
        ratios.sort_by(f64::total_cmp);
        let n = ratios.len();
        let median = if n % 2 == 1 {
            ratios[n / 2]
        } else {
            0.5 * (ratios[n / 2 - 1] + ratios[n / 2])
        };
        pass &= median <= 4.0;
        parts.push(format!("{} {median:.2}", b.problem.name()));
    }
    Line {
        id: 5,
        pass,
        text: format!("median MSE(SOLIT)/MSE(optimal) ≤ 4: {}", parts.join(", ")),
    }
}

fn lepskii_line(benches: &[Bench]) -> Line {
    let mut pass = true;
    let mut parts = Vec::new();
    for b in benches {
        let res = b.result(FilterKind::Tikhonov);
        let solit = res.mse_series(Selector::Solit).unwrap();
        let lep = res.mse_series(Selector::Lepskii).unwrap();
        let worst = solit.iter().zip(&lep).map(|(s, l)| s / l).fold(0.0, f64::max);
        pass &= worst <= 1.5;
        parts.push(format!("{} {worst:.3}", b.problem.name()));
    }
    Line {
        id: 6,
        pass,
        text: format!("max MSE(SOLIT)/MSE(Lepskii) ≤ 1.5: {}", parts.join(", ")),
    }
}

fn quantile_line(benches: &[Bench]) -> Line {
    let probs = [(-1.0f64).exp(), (-2.0f64).exp(), (-4.0f64).exp()];
    let mut pass = true;
    let mut parts = Vec::new();
    for b in benches {
        // the smallest σ gives the longest grid, which contains all others
        let sigma = *b.sigma.values().unwrap().last().unwrap();
        let spec = FilterSpec::for_spectrum(FilterKind::Tikhonov, b.built.lambda_max()).unwrap();
        let grid = build_grid(&b.built, &spec, sigma, 2.0).unwrap();
        let rows = quantile_fidelity(&b.built, &spec, &grid, &probs, 1_000_000, 11).unwrap();
        let worst = rows.iter().map(|r| r.rel_err).fold(0.0, f64::max);
        pass &= worst <= 0.05;
        parts.push(format!("{} {} pairs max {:.2e}", b.problem.name(), grid.m_max(), worst));
    }
    Line {
        id: 7,
        pass,
        text: format!("LTZ vs MC quantile ≤ 5%: {}", parts.join(", ")),
    }
}

fn grid_line(benches: &[Bench]) -> Line {
    let mut pass = true;
    let mut worst = (f64::INFINITY, 0.0f64);
    for b in benches {
        for kind in [FilterKind::Tikhonov, FilterKind::Showalter] {
            for cell in &b.result(kind).cells {
                for r in cell.grid.ratios() {
                    worst = (worst.0.min(r), worst.1.max(r));
                    pass &= (1.5..=2.5).contains(&r);
                }
            }
        }
    }
    let heat = benches.iter().find(|b| b.problem.name() == "heat").unwrap();
    let mut enlarged = 0;
    for cell in &heat.result(FilterKind::SpectralCutoff).cells {
        let top = cell.grid.ratios().into_iter().fold(0.0, f64::max);
        if top > 2.5 {
            pass &= cell.grid.theta2_enlarged && cell.grid.theta2 >= top;
        }
        enlarged += cell.grid.theta2_enlarged as usize;
    }
    Line {
        id: 8,
        pass,
        text: format!(
            "grid ratios in [1.5, 2.5]: observed [{:.4}, {:.4}]; heat cutoff enlarged θ₂ on {enlarged} grids",
            worst.0, worst.1
        ),
    }
}

fn first_accepted(size: usize, ok: impl Fn(usize, usize) -> bool) -> usize {
    let m_max = size - 1;
    (0..=m_max).find(|&m1| (m1 + 1..=m_max).all(|m2| ok(m1, m2))).unwrap()
}

fn brute_oracle(b: &PairTable, v: &PairTable, beta: f64) -> usize {
    let size = b.size();
    (0..size)
        .find(|&m| (m..size).all(|m1| (m1 + 1..size).all(|m2| b.get(m1, m2).powi(2) <= beta * beta * v.get(m1, m2))))
        .unwrap()
}

fn property_line(benches: &[Bench]) -> Line {
    let mut failures = Vec::new();

    // filter axioms on a 100 × 100 sample grid
    let samples: Vec<f64> = (0..100).map(|i| 10f64.powf(-8.0 + 8.0 * i as f64 / 99.0)).collect();
    for spec in [
        FilterSpec::spectral_cutoff(),
        FilterSpec::tikhonov(),
        FilterSpec::showalter(),
        FilterSpec::landweber(1.0).unwrap(),
    ] {
        let report = validate_ordered_filter(&spec, &samples, &samples);
        if !report.is_valid() || report.checked != 10_000 {
            failures.push(format!("axioms {}", spec.kind.name()));
        }
    }

    // v_{m1,m2} ≥ (√v_{m2} − √v_{m1})² on every benchmark grid, and m* ≤ m**
    for b in benches {
        for (kind, res, _) in &b.runs {
            let spec = FilterSpec::for_spectrum(*kind, b.built.lambda_max()).unwrap();
            for cell in &res.cells {
                let g = &cell.grid;
                let pv = g.pairwise_variances(&b.built, &spec);
                for m1 in 0..g.len() {
                    for m2 in m1 + 1..g.len() {
                        let lower = (g.v[m2].sqrt() - g.v[m1].sqrt()).powi(2);
                        if pv.get(m1, m2) < lower * (1.0 - 1e-9) - 1e-300 {
                            failures.push(format!(
                                "cauchy-schwarz {}/{} ({m1},{m2})",
                                b.problem.name(),
                                kind.name()
                            ));
                        }
                    }
                }
                if cell.m_star > cell.m_double_star {
                    failures.push(format!(
                        "m*>m** {}/{}/σ={:.1e}",
                        b.problem.name(),
                        kind.name(),
                        cell.sigma
                    ));
                }
            }
        }
    }

    // selectors against direct scans on random small instances
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let bench = &benches[0];
    let spec = FilterSpec::tikhonov();
    for trial in 0..500 {
        let size = rng.random_range(1..=7);
        let bhat = PairTable::from_fn(size, |_, _| rng.random_range(0.0..2.0));
        let kappa = PairTable::from_fn(size, |_, _| rng.random_range(0.0..2.0));
        let v = PairTable::from_fn(size, |_, _| rng.random_range(0.0..1.0));
        let th = ThresholdTable {
            kappa: kappa.clone(),
            x: vec![0.0; size.saturating_sub(1)],
            beta: 1.0,
            gamma: 1.0,
        };
        if solit_select(&bhat, &th) != first_accepted(size, |a, c| bhat.get(a, c) <= kappa.get(a, c)) {
            failures.push(format!("solit scan trial {trial}"));
        }
        let beta = rng.random_range(0.5..2.0);
        if oracle_select(&bhat, &v, beta) != brute_oracle(&bhat, &v, beta) {
            failures.push(format!("oracle scan trial {trial}"));
        }
        let sigma = 10f64.powf(rng.random_range(-4.0..-2.0));
        let mut grid = build_grid(&bench.built, &spec, sigma, 2.0).unwrap();
        grid.alphas.truncate(size);
        grid.v.truncate(size);
        let size = grid.len();
        let bhat = PairTable::from_fn(size, |_, _| rng.random_range(0.0..1.0) * sigma);
        let direct = first_accepted(size, |a, c| bhat.get(a, c) <= 4.0 * grid.v[c].sqrt());
        if lepskii_select(&bhat, &grid, 1.0) != direct {
            failures.push(format!("lepskii scan trial {trial}"));
        }
    }

    // equal weights: a·χ²_k with k even has sf e^{−y} Σ_{i<k/2} yⁱ/i!, y = t/(2a)
    for (k, a) in [(2usize, 1.0), (4, 0.3), (10, 2.5)] {
        let w = WeightVector::new(vec![a; k]).unwrap();
        for t in [0.5, 5.0, 40.0] {
            let y = t / (2.0 * a);
            let mut term = 1.0;
            let mut exact = 0.0;
            for i in 0..k / 2 {
                if i > 0 {
                    term *= y / i as f64;
                }
                exact += term;
            }
            exact *= (-y).exp();
            let got = ltz_tail_sf(&cumulant_traces(&w), t).unwrap();
            if (got - exact).abs() > 1e-9 * exact.max(1e-300) {
                failures.push(format!("ltz equal weights k={k} t={t}"));
            }
        }
    }

    // serialization round trips
    let res = bench.result(FilterKind::Tikhonov);
    let json = serde_json::to_string(res).unwrap();
    let back: ExperimentResult = serde_json::from_str(&json).unwrap();
    if &back != res {
        failures.push("json round trip".into());
    }
    let dir = tempfile::tempdir().unwrap();
    write_results(res, dir.path()).unwrap();
    if read_results(dir.path()).unwrap() != result_rows(res) {
        failures.push("csv round trip".into());
    }

    Line {
        id: 9,
        pass: failures.is_empty(),
        text: format!("property suites: {} failures {:?}", failures.len(), failures),
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let benches = run_benches();
    println!("benchmarks: 9 experiments in {:.1}s", start.elapsed().as_secs_f64());
    let checks: Vec<Box<dyn Fn() -> Line>> = vec![
        Box::new(|| rate_line(1, &benches[0], RateModel::Poly, 0.60, 0.90)),
        Box::new(|| rate_line(2, &benches[1], RateModel::Log, -4.0, -2.2)),
        Box::new(|| rate_line(3, &benches[2], RateModel::Log, -2.2, -1.0)),
        Box::new(|| oracle_line(&benches)),
        Box::new(|| near_oracle_line(&benches)),
        Box::new(|| lepskii_line(&benches)),
        Box::new(|| quantile_line(&benches)),
        Box::new(|| grid_line(&benches)),
        Box::new(|| property_line(&benches)),
    ];
    let lines: Vec<(Line, f64)> = checks
        .iter()
        .map(|check| {
            let t = Instant::now();
            let line = check();
            (line, t.elapsed().as_secs_f64())
        })
        .collect();
    let mut failed = 0;
    for (l, secs) in &lines {
        println!(
            "criterion {}: {} {} [{secs:.1}s]",
            l.id,
            if l.pass { "PASS" } else { "FAIL" },
            l.text
        );
        failed += !l.pass as usize;
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        lines.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
