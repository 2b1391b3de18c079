//! `levneuron` command line: leverage scores, single-neuron active fitting,
//! sampling experiments, and statistical verification checks.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use levneuron::fit::{fit_active, ConstraintMode, FitConfig, SolverKind, VecOracle};
use levneuron::harness::{
    self, emit_csv, method_name, run_synthetic, run_test_problem, sample_location_dump,
    ExperimentConfig, ExperimentProblem,
};
use levneuron::leverage::{leverage_scores, DesignMatrix, PlanKind};
use levneuron::neuron::NeuronSpec;
use levneuron::qoi_sims::QoiCache;
use levneuron::{Error, Result};

#[derive(Parser)]
#[command(
    name = "levneuron",
    about = "Leverage-score active learning for single neuron models",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print leverage scores of a design matrix (CSV with header c0..c{d-1}).
    Leverage {
        /// Input matrix CSV.
        #[arg(long)]
        input: PathBuf,
        /// Write scores here instead of stdout (single `tau` column).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit a single neuron model from m actively sampled label queries.
    Fit(FitArgs),
    /// Run a uniform-vs-leverage sampling experiment and emit an error table.
    Experiment(ExperimentArgs),
    /// Run a built-in statistical verification check.
    Verify {
        /// One of: embedding, bernstein, hardinstance, gradcheck.
        target: String,
    },
}

#[derive(Args)]
struct FitArgs {
    /// Input matrix CSV.
    #[arg(long)]
    input: PathBuf,
    /// Label vector CSV (single column, header c0).
    #[arg(long)]
    labels: PathBuf,
    /// Non-linearity: relu|abs|sigmoid|poly:<degree>:<coeffs>|exp|identity.
    #[arg(long, default_value = "relu")]
    spec: String,
    /// Number of label queries.
    #[arg(long, default_value_t = 100)]
    m: usize,
    /// Constraint parameter epsilon (used when the constraint is enforced).
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Enforce the norm constraint ||SXw||^2 <= ||Sy||^2 / (eps L^2).
    #[arg(long)]
    constrain: bool,
    /// Solver: gd (projected gradient descent) or brute (grid search, d <= 3).
    #[arg(long, default_value = "gd")]
    solver: String,
    /// Brute-force search box half-width.
    #[arg(long, default_value_t = 1.0)]
    bf_halfwidth: f64,
    /// Brute-force grid step.
    #[arg(long, default_value_t = 0.05)]
    bf_step: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 2)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the fitted coefficients here (one row, header c0..c{d-1}).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// One of: synthetic, synthetic_gaussian, oscillator, heat, burgers.
    problem: String,
    /// Feature degree (test problems only).
    #[arg(long)]
    degree: Option<usize>,
    /// Comma-separated sample sizes, strictly increasing.
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated subset of: leverage, uniform.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the error table and QoI cache.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Evaluation grid as n1xn2 (test problems) .
    #[arg(long)]
    grid: Option<String>,
    /// Synthetic dataset size.
    #[arg(long)]
    n: Option<usize>,
    /// Synthetic label noise standard deviation.
    #[arg(long)]
    noise_std: Option<f64>,
    /// Non-linearity name (defaults: relu, or exp for heat).
    #[arg(long)]
    spec: Option<String>,
    /// Disable the on-disk QoI cache.
    #[arg(long)]
    no_cache: bool,
    /// Also dump sampled parameter locations at this m (test problems).
    #[arg(long)]
    dump_samples: Option<usize>,
    /// Gradient-descent iteration cap per restart.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Number of random restarts per fit.
    #[arg(long)]
    restarts: Option<usize>,
    /// key=value file overriding the flags above (keys: problem, degree,
    /// samples, trials, methods, seed, out, grid, n, noise_std, spec,
    /// dump_samples).
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_methods(s: &str) -> Result<Vec<PlanKind>> {
    s.split(',')
        .map(|m| match m.trim() {
            "leverage" => Ok(PlanKind::Leverage),
            "uniform" => Ok(PlanKind::Uniform),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        })
        .collect()
}

fn parse_samples(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad sample size `{v}`")))
        })
        .collect()
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once('x')
        .ok_or_else(|| Error::InvalidArgument(format!("grid must be n1xn2, got `{s}`")))?;
    let n1 = a.parse().map_err(|_| Error::InvalidArgument(format!("bad grid `{s}`")))?;
    let n2 = b.parse().map_err(|_| Error::InvalidArgument(format!("bad grid `{s}`")))?;
    Ok((n1, n2))
}

impl ExperimentArgs {
    /// Config-file keys take precedence over command-line flags.
    fn apply_config(&mut self) -> Result<()> {
        let Some(path) = &self.config else { return Ok(()) };
        let text = std::fs::read_to_string(path)?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("{}:{}: expected key=value", path.display(), lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim().to_string());
            let bad = |k: &str, v: &str| {
                Error::Parse(format!("{}:{}: bad value `{v}` for `{k}`", path.display(), lineno + 1))
            };
            match key {
                "problem" => self.problem = value,
                "degree" => self.degree = Some(value.parse().map_err(|_| bad(key, &value))?),
                "samples" => self.samples = Some(value),
                "trials" => self.trials = Some(value.parse().map_err(|_| bad(key, &value))?),
                "methods" => self.methods = Some(value),
                "seed" => self.seed = Some(value.parse().map_err(|_| bad(key, &value))?),
                "out" => self.out = PathBuf::from(value),
                "grid" => self.grid = Some(value),
                "n" => self.n = Some(value.parse().map_err(|_| bad(key, &value))?),
                "noise_std" => {
                    self.noise_std = Some(value.parse().map_err(|_| bad(key, &value))?)
                }
                "spec" => self.spec = Some(value),
                "dump_samples" => {
                    self.dump_samples = Some(value.parse().map_err(|_| bad(key, &value))?)
                }
                other => {
                    return Err(Error::Parse(format!(
                        "{}:{}: unknown config key `{other}`",
                        path.display(),
                        lineno + 1
                    )))
                }
            }
        }
        Ok(())
    }
}

fn cmd_leverage(input: &PathBuf, output: Option<&PathBuf>) -> Result<()> {
    let x = DesignMatrix::new(harness::read_matrix_csv(input)?)?;
    let scores = leverage_scores(&x);
    let mut out = String::from("tau\n");
    for t in &scores.tau {
        out.push_str(&format!("{:.16e}\n", t));
    }
    match output {
        Some(path) => std::fs::write(path, out)?,
        None => print!("{out}"),
    }
    eprintln!(
        "n = {}, d = {}, rank = {}, sum tau = {:.12}",
        x.nrows(),
        x.ncols(),
        x.rank(),
        scores.total
    );
    Ok(())
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let x = DesignMatrix::new(harness::read_matrix_csv(&args.input)?)?;
    let y = harness::read_vector_csv(&args.labels)?;
    let spec = NeuronSpec::parse(&args.spec)?;
    let solver = match args.solver.as_str() {
        "gd" => SolverKind::GradientDescent,
        "brute" => SolverKind::BruteForce {
            boxes: vec![(-args.bf_halfwidth, args.bf_halfwidth); x.ncols()],
            step: args.bf_step,
        },
        other => {
            return Err(Error::InvalidArgument(format!("unknown solver `{other}` (gd|brute)")))
        }
    };
    let cfg = FitConfig {
        m: args.m,
        epsilon: args.epsilon,
        constraint_mode: if args.constrain {
            ConstraintMode::Enforced
        } else {
            ConstraintMode::Disabled
        },
        solver,
        max_iters: args.max_iters,
        restarts: args.restarts,
        seed: args.seed,
        ..Default::default()
    };
    let mut oracle = VecOracle::new(y.clone());
    let report = fit_active(&x, &mut oracle, &spec, &cfg)?;
    let rel = levneuron::neuron::relative_error(&x, &report.w_hat, &y, &spec)?;
    println!("w_hat = {:?}", report.w_hat.as_slice());
    println!(
        "sketched_loss = {:.6e}, full_relative_error = {:.6e}, queries = {}, iterations = {}",
        report.sketched_loss,
        rel,
        report.m_used,
        report.iterations
    );
    if let Some(path) = &args.output {
        let row = nalgebra::DMatrix::from_fn(1, report.w_hat.len(), |_, c| report.w_hat[c]);
        harness::write_matrix_csv(&row, path)?;
    }
    Ok(())
}

fn cmd_experiment(mut args: ExperimentArgs) -> Result<()> {
    args.apply_config()?;
    let problem = ExperimentProblem::parse(&args.problem)?;
    let mut cfg = match problem {
        ExperimentProblem::Test(p) => ExperimentConfig::test_defaults(p),
        _ => {
            let mut c = ExperimentConfig::synthetic_defaults();
            c.problem = problem;
            c
        }
    };
    if let Some(d) = args.degree {
        cfg.degree = d;
    }
    if let Some(s) = &args.samples {
        cfg.sample_sizes = parse_samples(s)?;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(m) = &args.methods {
        cfg.methods = parse_methods(m)?;
    }
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    if let Some(g) = &args.grid {
        cfg.grid = parse_grid(g)?;
    }
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(ns) = args.noise_std {
        cfg.noise_std = ns;
    }
    if let Some(s) = &args.spec {
        cfg.spec = NeuronSpec::parse(s)?;
    }
    if let Some(mi) = args.max_iters {
        cfg.max_iters = mi;
    }
    if let Some(r) = args.restarts {
        cfg.restarts = r;
    }
    std::fs::create_dir_all(&args.out)?;

    let name = match problem {
        ExperimentProblem::SyntheticUniform => "synthetic",
        ExperimentProblem::SyntheticGaussian => "synthetic_gaussian",
        ExperimentProblem::Test(p) => p.name(),
    };
    let table = match problem {
        ExperimentProblem::Test(p) => {
            if let Some(m) = args.dump_samples {
                for &method in &cfg.methods {
                    let path =
                        args.out.join(format!("{name}_{}_samples_m{m}.csv", method_name(method)));
                    sample_location_dump(p, method, m, cfg.master_seed, &path)?;
                    println!("wrote {}", path.display());
                }
            }
            if args.no_cache {
                run_test_problem(&cfg, None)?
            } else {
                let mut cache = QoiCache::open(&args.out.join("qoi_cache"))?;
                run_test_problem(&cfg, Some(&mut cache))?
            }
        }
        _ => run_synthetic(&cfg)?,
    };
    let path = args.out.join(format!("{name}_errors.csv"));
    emit_csv(&table, &path)?;
    println!("wrote {}", path.display());
    for row in &table.rows {
        println!(
            "{:>8}  m = {:>5}  median = {:.4e}  [{:.4e}, {:.4e}]  failures = {}",
            row.method, row.m, row.median_rel_err, row.q25, row.q75, row.failures
        );
    }
    Ok(())
}

fn cmd_verify(target: &str) -> Result<bool> {
    let outcome = harness::verify(target)?;
    println!(
        "{}: {} — {}",
        outcome.name,
        if outcome.pass { "PASS" } else { "FAIL" },
        outcome.detail
    );
    Ok(outcome.pass)
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Leverage { input, output } => {
            cmd_leverage(&input, output.as_ref())?;
            Ok(true)
        }
        Command::Fit(args) => {
            cmd_fit(&args)?;
            Ok(true)
        }
        Command::Experiment(args) => {
            cmd_experiment(args)?;
            Ok(true)
        }
        Command::Verify { target } => cmd_verify(&target),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
