//! Experiment orchestration: synthetic and test-problem sweeps comparing
//! leverage vs uniform sampling, the hard-instance demo, and CSV emission.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{legendre_vandermonde, tensor_grid, FeatureSpec};
use crate::fit::{fit_with_sketch, ConstraintMode, FitConfig, SolverKind, VecOracle};
use crate::leverage::{
    draw_sketch, leverage_scores, DesignMatrix, PlanKind, SamplingPlan,
};
use crate::neuron::{self, NeuronSpec};
use crate::qoi_sims::{build_qoi_dataset, QoiCache, QoiProblem};

// ------------------------------------------------------------------- seeding

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-trial RNG stream: disjoint across (method, m, trial), reproducible
/// from the master seed alone.
pub fn trial_seed(master_seed: u64, method: PlanKind, m: usize, trial: usize) -> u64 {
    let method_tag = match method {
        PlanKind::Leverage => 1u64,
        PlanKind::Uniform => 2u64,
    };
    let mut s = splitmix64(master_seed);
    s = splitmix64(s ^ method_tag);
    s = splitmix64(s ^ (m as u64).wrapping_mul(0x5851_f42d_4c95_7f2d));
    splitmix64(s ^ trial as u64)
}

// -------------------------------------------------------------- error tables

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub method: String,
    pub m: usize,
    pub median_rel_err: f64,
    pub q25: f64,
    pub q75: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    pub fn row(&self, method: PlanKind, m: usize) -> Option<&ErrorRow> {
        let name = method_name(method);
        self.rows.iter().find(|r| r.method == name && r.m == m)
    }
}

pub fn method_name(kind: PlanKind) -> &'static str {
    match kind {
        PlanKind::Leverage => "leverage",
        PlanKind::Uniform => "uniform",
    }
}

/// Linear-interpolation quantile on sorted data, q in [0,1].
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0);
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

fn summarize(method: PlanKind, m: usize, mut errs: Vec<f64>, failures: usize) -> ErrorRow {
    errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ErrorRow {
        method: method_name(method).to_string(),
        m,
        median_rel_err: quantile(&errs, 0.5),
        q25: quantile(&errs, 0.25),
        q75: quantile(&errs, 0.75),
        failures,
    }
}

/// Writes `method,m,median_rel_err,q25,q75,failures`, 17 significant digits,
/// LF endings, rows sorted by (method, m).
pub fn emit_csv(table: &ErrorTable, path: &Path) -> Result<()> {
    let mut rows = table.rows.clone();
    rows.sort_by(|a, b| a.method.cmp(&b.method).then(a.m.cmp(&b.m)));
    let mut out = String::from("method,m,median_rel_err,q25,q75,failures\n");
    for r in &rows {
        out.push_str(&format!(
            "{},{},{:.16e},{:.16e},{:.16e},{}\n",
            r.method, r.m, r.median_rel_err, r.q25, r.q75, r.failures
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn parse_csv(path: &Path) -> Result<ErrorTable> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(Error::Parse(format!("bad error-table row `{line}`")));
        }
        rows.push(ErrorRow {
            method: parts[0].to_string(),
            m: parts[1].parse().map_err(|_| Error::Parse(line.into()))?,
            median_rel_err: parts[2].parse().map_err(|_| Error::Parse(line.into()))?,
            q25: parts[3].parse().map_err(|_| Error::Parse(line.into()))?,
            q75: parts[4].parse().map_err(|_| Error::Parse(line.into()))?,
            failures: parts[5].parse().map_err(|_| Error::Parse(line.into()))?,
        });
    }
    Ok(ErrorTable { rows })
}

// ----------------------------------------------------------- configurations

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentProblem {
    SyntheticUniform,
    SyntheticGaussian,
    Test(QoiProblem),
}

impl ExperimentProblem {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "synthetic" | "synthetic_uniform" => Ok(Self::SyntheticUniform),
            "synthetic_gaussian" => Ok(Self::SyntheticGaussian),
            other => Ok(Self::Test(QoiProblem::parse(other)?)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: ExperimentProblem,
    pub spec: NeuronSpec,
    /// Feature degree for test problems; ignored for synthetic runs.
    pub degree: usize,
    pub sample_sizes: Vec<usize>,
    pub trials: usize,
    /// Standard deviation of the synthetic label noise.
    pub noise_std: f64,
    pub ground_truth_w: DVector<f64>,
    pub methods: Vec<PlanKind>,
    pub master_seed: u64,
    /// Synthetic row count.
    pub n: usize,
    /// Tensor-grid resolution for test problems.
    pub grid: (usize, usize),
    /// Brute-force search box half-width and step (synthetic d=3 fits).
    pub bf_halfwidth: f64,
    pub bf_step: f64,
    pub max_iters: usize,
    pub restarts: usize,
}

impl ExperimentConfig {
    pub fn synthetic_defaults() -> Self {
        Self {
            problem: ExperimentProblem::SyntheticUniform,
            spec: NeuronSpec::relu(),
            degree: 9,
            sample_sizes: vec![20, 40, 80, 160, 320],
            trials: 100,
            noise_std: 0.05f64.sqrt(),
            ground_truth_w: DVector::from_vec(vec![0.4, 0.4, -0.4]),
            methods: vec![PlanKind::Leverage, PlanKind::Uniform],
            master_seed: 0,
            n: 10_000,
            grid: (100, 100),
            bf_halfwidth: 1.0,
            bf_step: 0.05,
            max_iters: 2_000,
            restarts: 2,
        }
    }

    pub fn test_defaults(problem: QoiProblem) -> Self {
        // raw e^a here: run_test_problem's shift transform turns it into the
        // equivalent f(0) = 0 problem (e^{Xw} - 1 against y - 1)
        let spec = match problem {
            QoiProblem::Heat => NeuronSpec::raw(crate::neuron::NeuronKind::ExpShifted),
            _ => NeuronSpec::relu(),
        };
        Self {
            problem: ExperimentProblem::Test(problem),
            spec,
            degree: problem.default_degree(),
            sample_sizes: vec![50, 100, 200],
            trials: 100,
            noise_std: 0.0,
            ground_truth_w: DVector::zeros(0),
            methods: vec![PlanKind::Leverage, PlanKind::Uniform],
            master_seed: 0,
            n: 10_000,
            grid: (100, 100),
            bf_halfwidth: 1.0,
            bf_step: 0.05,
            max_iters: 2_000,
            restarts: 2,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::InvalidArgument("experiments need trials >= 1".into()));
        }
        if !self.sample_sizes.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "sample_sizes must be strictly increasing".into(),
            ));
        }
        if self.sample_sizes.is_empty() {
            return Err(Error::InvalidArgument("sample_sizes must be non-empty".into()));
        }
        Ok(())
    }
}

// ------------------------------------------------------- synthetic experiment

/// Synthetic dataset: 2 feature columns plus an all-ones bias column, with
/// y = f(X w*) + Gaussian noise.
pub fn synthetic_dataset(cfg: &ExperimentConfig) -> Result<(DesignMatrix, DVector<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(cfg.master_seed ^ 0xdead_beef));
    let uniform = Uniform::new_inclusive(-1.0, 1.0).unwrap();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let gaussian_data = cfg.problem == ExperimentProblem::SyntheticGaussian;
    let entries = DMatrix::from_fn(cfg.n, 3, |_, c| {
        if c == 2 {
            1.0
        } else if gaussian_data {
            normal.sample(&mut rng)
        } else {
            uniform.sample(&mut rng)
        }
    });
    let x = DesignMatrix::new(entries)?;
    let mut y = neuron::predict(&x, &cfg.ground_truth_w, &cfg.spec)?;
    if cfg.noise_std > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_std).unwrap();
        for v in y.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    Ok((x, y))
}

fn run_trials(
    x: &DesignMatrix,
    y: &DVector<f64>,
    y_norm_sq: f64,
    fit_spec: &NeuronSpec,
    y_fit: &DVector<f64>,
    plans: &[(PlanKind, SamplingPlan)],
    cfg: &ExperimentConfig,
    solver: &SolverKind,
) -> Result<ErrorTable> {
    let mut rows = Vec::new();
    for (kind, plan) in plans {
        for &m in &cfg.sample_sizes {
            let results: Vec<(f64, bool)> = (0..cfg.trials)
                .into_par_iter()
                .map(|trial| {
                    let seed = trial_seed(cfg.master_seed, *kind, m, trial);
                    let sketch = match draw_sketch(plan, m, seed) {
                        Ok(s) => s,
                        Err(_) => return (1.0, true),
                    };
                    let fit_cfg = FitConfig {
                        m,
                        constraint_mode: ConstraintMode::Disabled,
                        solver: solver.clone(),
                        max_iters: cfg.max_iters,
                        restarts: cfg.restarts,
                        seed,
                        ..Default::default()
                    };
                    let mut oracle = VecOracle::new(y_fit.clone());
                    match fit_with_sketch(x, &sketch, &mut oracle, fit_spec, &fit_cfg) {
                        Ok(report) => {
                            let loss =
                                neuron::full_loss(x, &report.w_hat, y_fit, fit_spec)
                                    .unwrap_or(y_norm_sq);
                            (loss / y_norm_sq, false)
                        }
                        // failed fits enter the statistics at the w = 0 loss
                        Err(_) => (y_fit.norm_squared() / y_norm_sq, true),
                    }
                })
                .collect();
            let failures = results.iter().filter(|(_, f)| *f).count();
            let errs: Vec<f64> = results.into_iter().map(|(e, _)| e).collect();
            rows.push(summarize(*kind, m, errs, failures));
        }
    }
    let _ = y;
    Ok(ErrorTable { rows })
}

/// Uniform-vs-leverage comparison on synthetic single neuron data, brute
/// force solver (d = 3).
pub fn run_synthetic(cfg: &ExperimentConfig) -> Result<ErrorTable> {
    cfg.validate()?;
    if !matches!(
        cfg.problem,
        ExperimentProblem::SyntheticUniform | ExperimentProblem::SyntheticGaussian
    ) {
        return Err(Error::InvalidArgument("run_synthetic needs a synthetic problem".into()));
    }
    let (x, y) = synthetic_dataset(cfg)?;
    let plans = vec![
        (
            PlanKind::Leverage,
            SamplingPlan::from_scores(&leverage_scores(&x))?,
        ),
        (PlanKind::Uniform, SamplingPlan::uniform(x.nrows())),
    ];
    let plans: Vec<_> =
        plans.into_iter().filter(|(k, _)| cfg.methods.contains(k)).collect();
    let solver = SolverKind::BruteForce {
        boxes: vec![(-cfg.bf_halfwidth, cfg.bf_halfwidth); 3],
        step: cfg.bf_step,
    };
    let y_norm_sq = y.norm_squared();
    run_trials(&x, &y, y_norm_sq, &cfg.spec, &y, &plans, cfg, &solver)
}

/// Uniform-vs-leverage comparison on a QoI surface; gradient descent with
/// the norm constraint disabled. Relative error is measured against the
/// full y, which the fitting path never sees beyond its m queries.
pub fn run_test_problem(cfg: &ExperimentConfig, cache: Option<&mut QoiCache>) -> Result<ErrorTable> {
    cfg.validate()?;
    let problem = match cfg.problem {
        ExperimentProblem::Test(p) => p,
        _ => {
            return Err(Error::InvalidArgument(
                "run_test_problem needs one of oscillator|heat|burgers".into(),
            ))
        }
    };
    let (x, y, _shift) = build_qoi_dataset(problem, cfg.degree, cfg.grid, cache)?;
    // non-linearities with f(0) != 0 are handled by the shift transform
    let (fit_spec, y_fit) = neuron::shift_transform(&cfg.spec, &y);
    let plans = vec![
        (
            PlanKind::Leverage,
            SamplingPlan::from_scores(&leverage_scores(&x))?,
        ),
        (PlanKind::Uniform, SamplingPlan::uniform(x.nrows())),
    ];
    let plans: Vec<_> =
        plans.into_iter().filter(|(k, _)| cfg.methods.contains(k)).collect();
    let y_norm_sq = y.norm_squared();
    run_trials(
        &x,
        &y,
        y_norm_sq,
        &fit_spec,
        &y_fit,
        &plans,
        cfg,
        &SolverKind::GradientDescent,
    )
}

// -------------------------------------------------------- sample visualization

/// Physical parameter locations of the sampled rows for a test problem,
/// written as CSV `param1,param2`, one row per draw.
pub fn sample_location_dump(
    problem: QoiProblem,
    method: PlanKind,
    m: usize,
    seed: u64,
    path: &Path,
) -> Result<()> {
    let mut out = String::from("param1,param2\n");
    if m > 0 {
        let points = sample_locations(problem, method, m, seed)?;
        for (p1, p2) in points {
            out.push_str(&format!("{:.16e},{:.16e}\n", p1, p2));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn sample_locations(
    problem: QoiProblem,
    method: PlanKind,
    m: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let rect = problem.rect();
    let grid = tensor_grid(&rect, 100, 100);
    let spec = FeatureSpec { degree: problem.default_degree(), rect };
    let x = legendre_vandermonde(&grid, &spec)?;
    let plan = match method {
        PlanKind::Leverage => SamplingPlan::from_scores(&leverage_scores(&x))?,
        PlanKind::Uniform => SamplingPlan::uniform(x.nrows()),
    };
    let sketch = draw_sketch(&plan, m, seed)?;
    Ok(sketch.indices().iter().map(|&i| grid[i]).collect())
}

/// Fraction of the points that lie in the outer border band of the
/// rectangle (band of the given relative width on each side).
pub fn border_band_fraction(
    problem: QoiProblem,
    points: &[(f64, f64)],
    band: f64,
) -> f64 {
    let rect = problem.rect();
    let in_band = |(u, v): &(f64, f64)| {
        let su = (u - rect.lo.0) / (rect.hi.0 - rect.lo.0);
        let sv = (v - rect.lo.1) / (rect.hi.1 - rect.lo.1);
        su < band || su > 1.0 - band || sv < band || sv > 1.0 - band
    };
    points.iter().filter(|p| in_band(p)).count() as f64 / points.len() as f64
}

// ------------------------------------------------------------- hard instance

/// The 2^d x (d+1) hypercube design: binary rows plus an all-ones column,
/// and for each vertex i a weight vector w_i with ReLU(X w_i) = e_i.
pub fn hard_instance(d: usize) -> Result<(DesignMatrix, Vec<DVector<f64>>)> {
    if d == 0 || d > 12 {
        return Err(Error::InvalidArgument(format!(
            "hard instance supports 1 <= d <= 12, got {d}"
        )));
    }
    let rows = 1usize << d;
    // column j holds bit (d-1-j): row order (0,..,0), (0,..,1), ...
    let bit = |row: usize, col: usize| (row >> (d - 1 - col)) & 1;
    let entries = DMatrix::from_fn(rows, d + 1, |r, c| {
        if c == d {
            1.0
        } else {
            bit(r, c) as f64
        }
    });
    let x = DesignMatrix::new(entries)?;
    // vertex b: w = (2b - 1, 1 - |b|_1); then <x, w> = 1 - |x - b|_1
    let ws = (0..rows)
        .map(|r| {
            let ones: usize = (0..d).map(|c| bit(r, c)).sum();
            DVector::from_fn(d + 1, |j, _| {
                if j == d {
                    1.0 - ones as f64
                } else {
                    2.0 * bit(r, j) as f64 - 1.0
                }
            })
        })
        .collect();
    Ok((x, ws))
}

/// Exact probability that a uniform sample of size s misses a fixed vertex
/// of the d-cube: 1 - s/2^d (for s distinct sampled rows).
pub fn hard_instance_miss_probability(d: usize, s: usize) -> f64 {
    (1.0 - s as f64 / (1u64 << d) as f64).max(0.0)
}

// ---------------------------------------------------------------- matrix I/O

/// Matrix CSV with header row `c0..c{d-1}`, one data row per sample row.
pub fn write_matrix_csv(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    let header: Vec<String> = (0..m.ncols()).map(|c| format!("c{c}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:.16e}", m[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("{}: empty file", path.display())))?;
    let d = header.split(',').count();
    for (c, name) in header.split(',').enumerate() {
        if name.trim() != format!("c{c}") {
            return Err(Error::Parse(format!(
                "{}: expected header c0..c{}, found `{}`",
                path.display(),
                d - 1,
                header
            )));
        }
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| Error::Parse(format!("bad value `{v}`"))))
            .collect::<Result<_>>()?;
        if vals.len() != d {
            return Err(Error::Parse(format!(
                "{}: row {} has {} columns, header has {d}",
                path.display(),
                rows + 1,
                vals.len()
            )));
        }
        data.extend(vals);
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, d, &data))
}

pub fn read_vector_csv(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix_csv(path)?;
    if m.ncols() != 1 {
        return Err(Error::Parse(format!(
            "{}: expected a single column, got {}",
            path.display(),
            m.ncols()
        )));
    }
    Ok(DVector::from_iterator(m.nrows(), m.iter().copied()))
}

// -------------------------------------------------------------- verification

#[derive(Debug, Clone)]
pub struct VerifyOutcome {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn gaussian_design(n: usize, d: usize, seed: u64) -> DesignMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    DesignMatrix::new(DMatrix::from_fn(n, d, |_, _| normal.sample(&mut rng))).unwrap()
}

/// Subspace-embedding check: 1000 x 5 Gaussian design, leverage sketches of
/// m = 800 rows; distortion below 0.5 must hold in at least 95 of 100 seeds.
pub fn verify_embedding() -> Result<VerifyOutcome> {
    let x = gaussian_design(1000, 5, 7);
    let plan = SamplingPlan::from_scores(&leverage_scores(&x))?;
    let mut good = 0;
    for seed in 0..100u64 {
        let sketch = draw_sketch(&plan, 800, seed)?;
        if crate::leverage::embedding_distortion(&x, &sketch)? < 0.5 {
            good += 1;
        }
    }
    Ok(VerifyOutcome {
        name: "embedding",
        pass: good >= 95,
        detail: format!("distortion < 0.5 in {good}/100 sketches (need >= 95)"),
    })
}

/// Pairwise distortion bound with m = ceil(3 d log(2/delta) / eps^2) = 133
/// at d = 3, eps = 0.5, delta = 0.05; at most 10 of 100 trials may violate.
pub fn verify_bernstein() -> Result<VerifyOutcome> {
    let d = 3;
    let (eps, delta) = (0.5f64, 0.05f64);
    let m = (3.0 * d as f64 * (2.0 / delta).ln() / (eps * eps)).ceil() as usize;
    let x = gaussian_design(500, d, 11);
    let plan = SamplingPlan::from_scores(&leverage_scores(&x))?;
    let spec = NeuronSpec::relu();
    let mut violations = 0;
    for seed in 0..100u64 {
        let sketch = draw_sketch(&plan, m, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x51ab));
        let normal = Normal::new(0.0, 1.0).unwrap();
        let w1 = DVector::from_fn(d, |_, _| normal.sample(&mut rng));
        let w2 = DVector::from_fn(d, |_, _| normal.sample(&mut rng));
        let (lhs, bound) =
            crate::leverage::lipschitz_distortion_check(&x, &w1, &w2, &spec, &sketch)?;
        if lhs > bound {
            violations += 1;
        }
    }
    Ok(VerifyOutcome {
        name: "bernstein",
        pass: violations <= 10,
        detail: format!("bound violated in {violations}/100 trials at m = {m} (allow <= 10)"),
    })
}

/// Finite-difference check of the loss subgradient on 100 random smooth
/// instances (and kink-free ReLU/abs points); max relative error <= 1e-4.
pub fn verify_gradcheck() -> Result<VerifyOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let specs = [
        NeuronSpec::identity(),
        NeuronSpec::sigmoid_shifted(),
        NeuronSpec::poly(vec![0.0, 1.0, 0.5, -0.2], (-5.0, 5.0))?,
        NeuronSpec::relu(),
        NeuronSpec::abs(),
    ];
    let mut max_err: f64 = 0.0;
    let mut checked = 0;
    while checked < 100 {
        let spec = &specs[checked % specs.len()];
        let (n, d) = (20, 4);
        let x = gaussian_design(n, d, rng.next_u64());
        let w = DVector::from_fn(d, |_, _| normal.sample(&mut rng));
        // keep FD steps away from the ReLU/abs kink at zero
        let xw = x.entries() * &w;
        if matches!(spec.kind(), crate::neuron::NeuronKind::Relu | crate::neuron::NeuronKind::Abs)
            && xw.iter().any(|a| a.abs() < 1e-3)
        {
            continue;
        }
        let y = DVector::from_fn(n, |_, _| normal.sample(&mut rng));
        let (_, grad) = neuron::loss_and_subgradient(&x, &w, &y, spec, None)?;
        let h = 1e-6;
        for j in 0..d {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[j] += h;
            wm[j] -= h;
            let fp = neuron::full_loss(&x, &wp, &y, spec)?;
            let fm = neuron::full_loss(&x, &wm, &y, spec)?;
            let fd = (fp - fm) / (2.0 * h);
            let rel = (grad[j] - fd).abs() / grad[j].abs().max(1.0);
            max_err = max_err.max(rel);
        }
        checked += 1;
    }
    Ok(VerifyOutcome {
        name: "gradcheck",
        pass: max_err <= 1e-4,
        detail: format!("max relative gradient error {max_err:.3e} over 100 instances (tol 1e-4)"),
    })
}

/// Hard instance at d = 8: every selector w_i reproduces e_i exactly, and a
/// uniform sample of s = 4d rows misses a fixed vertex with probability
/// 1 - s/2^d; the empirical rate over 2000 trials must agree within 0.05.
pub fn verify_hardinstance() -> Result<VerifyOutcome> {
    let d = 8;
    let (x, ws) = hard_instance(d)?;
    let spec = NeuronSpec::relu();
    for (i, w) in ws.iter().enumerate() {
        let out = neuron::predict(&x, w, &spec)?;
        for (j, &v) in out.iter().enumerate() {
            let expect = if i == j { 1.0 } else { 0.0 };
            if v != expect {
                return Ok(VerifyOutcome {
                    name: "hardinstance",
                    pass: false,
                    detail: format!("selector {i} wrong at row {j}: {v}"),
                });
            }
        }
    }
    let s = 4 * d;
    let n = 1usize << d;
    let exact = hard_instance_miss_probability(d, s);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let trials = 2000;
    let mut misses = 0;
    for _ in 0..trials {
        // s distinct rows uniformly at random, target vertex 0
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..s {
            let j = rng.random_range(k..n);
            perm.swap(k, j);
        }
        if !perm[..s].contains(&0) {
            misses += 1;
        }
    }
    let emp = misses as f64 / trials as f64;
    Ok(VerifyOutcome {
        name: "hardinstance",
        pass: (emp - exact).abs() <= 0.05,
        detail: format!(
            "2^{d} selectors exact; empirical miss rate {emp:.4} vs exact {exact:.4} at s = {s}"
        ),
    })
}

pub fn verify(which: &str) -> Result<VerifyOutcome> {
    match which {
        "embedding" => verify_embedding(),
        "bernstein" => verify_bernstein(),
        "hardinstance" => verify_hardinstance(),
        "gradcheck" => verify_gradcheck(),
        other => Err(Error::InvalidArgument(format!(
            "unknown verify target `{other}` (embedding|bernstein|hardinstance|gradcheck)"
        ))),
    }
}
