use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use solit::harness::{fit_rate, quantile_fidelity, verify_oracle_inequality, RateModel};
use solit::results::{read_results, series_by_selector, write_results};
use solit::{
    build_grid, run_experiment, ExperimentConfig, FilterKind, FilterSpec, ProblemSpec, Selector, SpectralProblem,
};

/// Consulted after `--out` and before the config file.
const OUT_ENV: &str = "SOLIT_OUT";
const DEFAULT_OUT: &str = "results";

#[derive(Parser)]
#[command(
    name = "solit",
    version,
    about = "Parameter choice experiments for spectral regularization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment and write results.csv, grid_<i>.csv and meta.json
    Simulate(SimulateArgs),
    /// Fit convergence rates to a results directory
    Rates(RatesArgs),
    /// Print the candidate grid for one noise level as CSV
    Candidates(CandidatesArgs),
    /// Compare approximate and Monte Carlo quantiles on adjacent grid pairs
    QuantileCheck(QuantileArgs),
}

#[derive(Args, Clone)]
struct ProblemArgs {
    /// antiderivative | gradiometry | heat
    #[arg(long)]
    problem: Option<String>,
    /// Truncation level
    #[arg(long)]
    n: Option<usize>,
    /// Gradiometry radius R
    #[arg(long)]
    radius: Option<f64>,
    /// Heat observation time
    #[arg(long)]
    t_bar: Option<f64>,
    /// cutoff | tikhonov | showalter | landweber
    #[arg(long)]
    filter: Option<FilterKind>,
}

impl ProblemArgs {
    /// Applies the flags on top of `base`.
    fn problem_spec(&self, base: ProblemSpec) -> Result<ProblemSpec> {
        let mut spec = match &self.problem {
            Some(name) => name.parse::<ProblemSpec>()?,
            None => base,
        };
        if let Some(n) = self.n {
            spec = spec.with_n(n);
        }
        match (&mut spec, self.radius, self.t_bar) {
            (_, None, None) => {}
            (ProblemSpec::Gradiometry { radius, .. }, Some(r), None) => *radius = r,
            (ProblemSpec::Heat { t_bar, .. }, None, Some(t)) => *t_bar = t,
            (other, _, _) => bail!("--radius/--t-bar do not apply to problem '{}'", other.name()),
        }
        Ok(spec)
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON config file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    problem: ProblemArgs,
    /// Comma-separated: solit,lepskii,oracle,optimal,noise-level
    #[arg(long, value_delimiter = ',')]
    selectors: Option<Vec<Selector>>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    sigma_start: Option<f64>,
    #[arg(long)]
    sigma_stop: Option<f64>,
    #[arg(long)]
    sigma_count: Option<usize>,
    /// Monte Carlo runs per noise level
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Tuning constant of the classical balancing rule
    #[arg(long)]
    lepskii_kappa: Option<f64>,
    /// Use exact data in every run
    #[arg(long)]
    noise_free: bool,
    /// Output directory (falls back to $SOLIT_OUT, then the config file, then ./results)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the effective config as JSON and exit
    #[arg(long)]
    dump_config: bool,
}

#[derive(Args)]
struct RatesArgs {
    /// Results directory written by `simulate`
    #[arg(long = "in")]
    input: PathBuf,
    /// poly | log
    #[arg(long, default_value = "poly")]
    model: RateModel,
}

#[derive(Args)]
struct CandidatesArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 2.0)]
    theta: f64,
}

#[derive(Args)]
struct QuantileArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 2.0)]
    theta: f64,
    #[arg(long, default_value_t = 1_000_000)]
    mc_samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn effective_config(args: &SimulateArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.problem = args.problem.problem_spec(cfg.problem)?;
    if let Some(f) = args.problem.filter {
        cfg.filter = f;
    }
    if let Some(s) = &args.selectors {
        cfg.selectors = s.clone();
    }
    let overrides = [
        (&mut cfg.theta, args.theta),
        (&mut cfg.beta, args.beta),
        (&mut cfg.gamma, args.gamma),
        (&mut cfg.sigma.start, args.sigma_start),
        (&mut cfg.sigma.stop, args.sigma_stop),
        (&mut cfg.lepskii_kappa, args.lepskii_kappa),
    ];
    for (field, flag) in overrides {
        if let Some(v) = flag {
            *field = v;
        }
    }
    if let Some(v) = args.sigma_count {
        cfg.sigma.count = v;
    }
    if let Some(v) = args.runs {
        cfg.runs = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if args.noise_free {
        cfg.noise_free = true;
    }
    let env_out = std::env::var_os(OUT_ENV).map(PathBuf::from);
    cfg.output = Some(
        args.out
            .clone()
            .or(env_out)
            .or(cfg.output.take())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
    );
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cfg = effective_config(&args)?;
    if args.dump_config {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let out = cfg.output.clone().expect("output resolved");
    let result = run_experiment(&cfg).context("experiment failed")?;
    write_results(&result, &out)?;
    let mut stdout = io::stdout().lock();
    for cell in &result.cells {
        write!(
            stdout,
            "sigma={:.3e} m_max={} m*={}",
            cell.sigma,
            cell.grid.m_max(),
            cell.m_star
        )?;
        for s in &cell.selectors {
            write!(stdout, " {}={:.4e}", s.selector, s.mse)?;
        }
        writeln!(stdout)?;
    }
    if cfg.selectors.contains(&Selector::Solit) {
        let report = verify_oracle_inequality(&result)?;
        writeln!(
            stdout,
            "oracle inequality: {}/{} cells hold",
            report.cells.len() - report.violations().count(),
            report.cells.len()
        )?;
    }
    writeln!(stdout, "wrote {}", out.display())?;
    Ok(())
}

fn rates(args: RatesArgs) -> Result<()> {
    let rows = read_results(&args.input)?;
    if rows.is_empty() {
        bail!("{} holds no result rows", args.input.display());
    }
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "selector,model,slope,intercept")?;
    for (selector, (sigmas, mse)) in series_by_selector(&rows) {
        let fit = fit_rate(&sigmas, &mse, args.model).with_context(|| format!("fitting {selector}"))?;
        let model = match args.model {
            RateModel::Poly => "poly",
            RateModel::Log => "log",
        };
        writeln!(stdout, "{selector},{model},{},{}", fit.slope, fit.intercept)?;
    }
    Ok(())
}

fn problem_and_filter(args: &ProblemArgs) -> Result<(SpectralProblem, FilterSpec)> {
    let spec = args.problem_spec(ProblemSpec::antiderivative())?;
    let problem = spec.build()?;
    let filter = FilterSpec::for_spectrum(args.filter.unwrap_or(FilterKind::Tikhonov), problem.lambda_max())?;
    Ok((problem, filter))
}

fn candidates(args: CandidatesArgs) -> Result<()> {
    let (problem, filter) = problem_and_filter(&args.problem)?;
    let grid = build_grid(&problem, &filter, args.sigma, args.theta)?;
    grid.write_csv(io::stdout().lock())?;
    if grid.theta2_enlarged {
        eprintln!("note: ratio bound enlarged to θ₂ = {:.4}", grid.theta2);
    }
    Ok(())
}

fn quantile_check(args: QuantileArgs) -> Result<()> {
    let (problem, filter) = problem_and_filter(&args.problem)?;
    let grid = build_grid(&problem, &filter, args.sigma, args.theta)?;
    let probs = [(-1.0f64).exp(), (-2.0f64).exp(), (-4.0f64).exp()];
    let rows = quantile_fidelity(&problem, &filter, &grid, &probs, args.mc_samples, args.seed)?;
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "m1,m2,p,ltz,mc,rel_err")?;
    for r in rows {
        writeln!(stdout, "{},{},{},{},{},{}", r.m1, r.m2, r.p, r.ltz, r.mc, r.rel_err)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Rates(a) => rates(a),
        Command::Candidates(a) => candidates(a),
        Command::QuantileCheck(a) => quantile_check(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
