//! End-to-end active fitting: leverage sampling, querying the target at the
//! sampled rows, and solving the (optionally constrained) sketched problem.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::leverage::{draw_sketch, leverage_scores, DesignMatrix, SamplingPlan, Sketch};
use crate::neuron::NeuronSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintMode {
    /// Feasible set {w : ||SXw||^2 <= (1 / (eps L^2)) ||Sy||^2}.
    Enforced,
    Disabled,
}

#[derive(Debug, Clone)]
pub enum SolverKind {
    GradientDescent,
    /// Exhaustive grid search; d <= 3 only.
    BruteForce { boxes: Vec<(f64, f64)>, step: f64 },
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub m: usize,
    pub epsilon: f64,
    pub constraint_mode: ConstraintMode,
    pub solver: SolverKind,
    pub max_iters: usize,
    pub init_w: Option<DVector<f64>>,
    pub tol_grad: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            m: 100,
            epsilon: 0.1,
            constraint_mode: ConstraintMode::Disabled,
            solver: SolverKind::GradientDescent,
            max_iters: 10_000,
            init_w: None,
            tol_grad: 1e-8,
            restarts: 2,
            seed: 0,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::InvalidArgument("fit needs m >= 1".into()));
        }
        if self.constraint_mode == ConstraintMode::Enforced
            && !(self.epsilon > 0.0 && self.epsilon < 1.0)
        {
            return Err(Error::InvalidArgument(format!(
                "epsilon must lie in (0,1) with the constraint enforced, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub w_hat: DVector<f64>,
    pub sketched_loss: f64,
    pub m_used: usize,
    pub constraint_active: bool,
    /// Filled only by the evaluation harness, which holds the full y.
    pub full_relative_error: Option<f64>,
    pub seed: u64,
    pub iterations: usize,
}

/// Query access to a target vector, one entry at a time.
pub trait QueryOracle {
    fn query(&mut self, i: usize) -> f64;
    fn queries_made(&self) -> usize;
}

/// Oracle backed by a fully materialized vector; counts every call.
pub struct VecOracle {
    y: DVector<f64>,
    count: usize,
}

impl VecOracle {
    pub fn new(y: DVector<f64>) -> Self {
        Self { y, count: 0 }
    }
}

impl QueryOracle for VecOracle {
    fn query(&mut self, i: usize) -> f64 {
        self.count += 1;
        self.y[i]
    }

    fn queries_made(&self) -> usize {
        self.count
    }
}

/// The sketched objective: selected rows (unweighted), squared weights, and
/// raw sampled responses. Loss is sum_j weight_j^2 (f(a_j . w) - y_j)^2.
pub(crate) struct SketchedProblem {
    rows: DMatrix<f64>,
    weights_sq: Vec<f64>,
    y: Vec<f64>,
    spec: NeuronSpec,
    /// Squared constraint radius in ||SXw|| terms, None when disabled.
    radius_sq: Option<f64>,
}

impl SketchedProblem {
    fn new(
        x: &DesignMatrix,
        sketch: &Sketch,
        y_raw: Vec<f64>,
        spec: &NeuronSpec,
        radius_sq: Option<f64>,
    ) -> Self {
        let d = x.ncols();
        let m = sketch.m();
        let mut rows = DMatrix::zeros(m, d);
        for (j, &i) in sketch.indices().iter().enumerate() {
            for c in 0..d {
                rows[(j, c)] = x.entries()[(i, c)];
            }
        }
        let weights_sq = sketch.weights().iter().map(|w| w * w).collect();
        Self { rows, weights_sq, y: y_raw, spec: spec.clone(), radius_sq }
    }

    fn dim(&self) -> usize {
        self.rows.ncols()
    }

    fn loss(&self, w: &DVector<f64>) -> f64 {
        let a = &self.rows * w;
        let mut loss = 0.0;
        for j in 0..a.len() {
            let r = self.spec.eval_unchecked(a[j]) - self.y[j];
            loss += self.weights_sq[j] * r * r;
        }
        loss
    }

    fn loss_grad(&self, w: &DVector<f64>) -> (f64, DVector<f64>) {
        let a = &self.rows * w;
        let mut loss = 0.0;
        let mut coeff = DVector::zeros(a.len());
        for j in 0..a.len() {
            let r = self.spec.eval_unchecked(a[j]) - self.y[j];
            loss += self.weights_sq[j] * r * r;
            coeff[j] = 2.0 * self.weights_sq[j] * self.spec.deriv(a[j]) * r;
        }
        (loss, self.rows.transpose() * coeff)
    }

    fn sxw_norm_sq(&self, w: &DVector<f64>) -> f64 {
        let a = &self.rows * w;
        (0..a.len()).map(|j| self.weights_sq[j] * a[j] * a[j]).sum()
    }

    /// Scale w back onto the constraint ball if it lies outside.
    fn project(&self, w: &mut DVector<f64>) {
        if let Some(r2) = self.radius_sq {
            let norm = self.sxw_norm_sq(w);
            if norm > r2 {
                if r2 <= 0.0 {
                    w.fill(0.0);
                } else {
                    *w *= (r2 / norm).sqrt();
                }
            }
        }
    }

    /// Weighted least-squares solution against the linearized targets
    /// f^{-1}(y_j): a warm start for gradient descent (at w = 0 the ReLU
    /// subgradient vanishes identically, so descent needs a non-zero seed).
    fn linearized_init(&self) -> Option<DVector<f64>> {
        let m = self.rows.nrows();
        let mut scaled = self.rows.clone();
        let mut target = DVector::zeros(m);
        for j in 0..m {
            let s = self.weights_sq[j].sqrt();
            target[j] = s * self.spec.invert_approx(self.y[j]);
            for c in 0..scaled.ncols() {
                scaled[(j, c)] *= s;
            }
        }
        scaled.svd(true, true).solve(&target, 1e-10).ok().map(|w| {
            let mut w = w;
            self.project(&mut w);
            w
        })
    }

    #[cfg(test)]
    fn feasible(&self, w: &DVector<f64>) -> bool {
        match self.radius_sq {
            None => true,
            Some(r2) => self.sxw_norm_sq(w) <= r2 * (1.0 + 1e-12),
        }
    }
}

/// Algorithm: leverage scores -> plan -> sketch of m rows -> query the
/// sampled entries of y -> solve the sketched problem -> report w_hat.
///
/// Duplicate sampled indices are queried once and cached, but keep their
/// multiplicity in the sketched loss.
pub fn fit_active(
    x: &DesignMatrix,
    oracle: &mut dyn QueryOracle,
    spec: &NeuronSpec,
    cfg: &FitConfig,
) -> Result<FitReport> {
    cfg.validate()?;
    let scores = leverage_scores(x);
    let plan = SamplingPlan::from_scores(&scores)?;
    let sketch = draw_sketch(&plan, cfg.m, cfg.seed)?;
    fit_with_sketch(x, &sketch, oracle, spec, cfg)
}

/// Same as [`fit_active`] but with a caller-supplied sketch (used by the
/// harness to compare sampling plans on identical machinery).
pub fn fit_with_sketch(
    x: &DesignMatrix,
    sketch: &Sketch,
    oracle: &mut dyn QueryOracle,
    spec: &NeuronSpec,
    cfg: &FitConfig,
) -> Result<FitReport> {
    cfg.validate()?;
    let mut cache: BTreeMap<usize, f64> = BTreeMap::new();
    for &i in sketch.indices() {
        if !cache.contains_key(&i) {
            let v = oracle.query(i);
            cache.insert(i, v);
        }
    }
    let y_raw: Vec<f64> = sketch.indices().iter().map(|i| cache[i]).collect();

    let radius_sq = match cfg.constraint_mode {
        ConstraintMode::Disabled => None,
        ConstraintMode::Enforced => {
            let l = spec.lipschitz().ok_or_else(|| {
                Error::NonLipschitzConstraint(format!("{:?}", spec.kind()))
            })?;
            let sy_sq: f64 = sketch
                .weights()
                .iter()
                .zip(&y_raw)
                .map(|(w, y)| (w * y).powi(2))
                .sum();
            Some(sy_sq / (cfg.epsilon * l * l))
        }
    };

    let problem = SketchedProblem::new(x, sketch, y_raw, spec, radius_sq);
    let (w_hat, iterations) = match &cfg.solver {
        SolverKind::GradientDescent => solve_gradient_descent(&problem, cfg)?,
        SolverKind::BruteForce { boxes, step } => {
            let w = grid_minimize(&problem, boxes, *step)?;
            (w, 0)
        }
    };
    let sketched_loss = problem.loss(&w_hat);
    Ok(FitReport {
        w_hat,
        sketched_loss,
        m_used: sketch.m(),
        constraint_active: cfg.constraint_mode == ConstraintMode::Enforced,
        full_relative_error: None,
        seed: sketch.seed(),
        iterations,
    })
}

/// Solve the step-5 minimization for weight-scaled responses
/// `sy_j = weight_j * y_{i_j}` (the vector S y).
pub fn solve_sketched(
    x: &DesignMatrix,
    sketch: &Sketch,
    sy: &[f64],
    spec: &NeuronSpec,
    cfg: &FitConfig,
) -> Result<DVector<f64>> {
    if sy.len() != sketch.m() {
        return Err(Error::DimensionMismatch(format!(
            "sy has length {}, sketch has m = {}",
            sy.len(),
            sketch.m()
        )));
    }
    let y_raw: Vec<f64> = sy.iter().zip(sketch.weights()).map(|(s, w)| s / w).collect();
    let radius_sq = match cfg.constraint_mode {
        ConstraintMode::Disabled => None,
        ConstraintMode::Enforced => {
            let l = spec.lipschitz().ok_or_else(|| {
                Error::NonLipschitzConstraint(format!("{:?}", spec.kind()))
            })?;
            let sy_sq: f64 = sy.iter().map(|s| s * s).sum();
            Some(sy_sq / (cfg.epsilon * l * l))
        }
    };
    let problem = SketchedProblem::new(x, sketch, y_raw, spec, radius_sq);
    match &cfg.solver {
        SolverKind::GradientDescent => Ok(solve_gradient_descent(&problem, cfg)?.0),
        SolverKind::BruteForce { boxes, step } => grid_minimize(&problem, boxes, *step),
    }
}

const ARMIJO_C1: f64 = 1e-4;
const STEP_GROW: f64 = 1.5;
const MAX_BACKTRACKS: usize = 60;
const MAX_DIVERGENCE_RETRIES: usize = 5;

/// Projected gradient descent with backtracking line search, best iterate
/// across restarts (w0 = 0 or the given init, a linearized least-squares
/// warm start, plus Gaussian restarts).
fn solve_gradient_descent(
    problem: &SketchedProblem,
    cfg: &FitConfig,
) -> Result<(DVector<f64>, usize)> {
    let d = problem.dim();
    let mut inits: Vec<DVector<f64>> = Vec::with_capacity(cfg.restarts + 2);
    inits.push(cfg.init_w.clone().unwrap_or_else(|| DVector::zeros(d)));
    if let Some(w_ls) = problem.linearized_init() {
        inits.push(w_ls);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let normal = Normal::new(0.0, 1.0).unwrap();
    for _ in 0..cfg.restarts {
        inits.push(DVector::from_fn(d, |_, _| normal.sample(&mut rng)));
    }

    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut total_iters = 0;
    for mut w0 in inits {
        problem.project(&mut w0);
        let mut outcome = None;
        let mut init_step = 1.0;
        for _ in 0..=MAX_DIVERGENCE_RETRIES {
            match descend(problem, &w0, init_step, cfg) {
                Ok(res) => {
                    outcome = Some(res);
                    break;
                }
                Err(Error::Diverged(_)) => init_step *= 0.5,
                Err(e) => return Err(e),
            }
        }
        let (loss, w, iters) = outcome
            .ok_or_else(|| Error::Diverged("loss non-finite after 5 step halvings".into()))?;
        total_iters += iters;
        if best.as_ref().map_or(true, |(b, _)| loss < *b) {
            best = Some((loss, w));
        }
    }
    let (_, w) = best.expect("at least one init");
    Ok((w, total_iters))
}

fn descend(
    problem: &SketchedProblem,
    w0: &DVector<f64>,
    init_step: f64,
    cfg: &FitConfig,
) -> Result<(f64, DVector<f64>, usize)> {
    let mut w = w0.clone();
    let (mut loss, mut grad) = problem.loss_grad(&w);
    if !loss.is_finite() {
        return Err(Error::Diverged("non-finite loss at initial point".into()));
    }
    let mut best_loss = loss;
    let mut best_w = w.clone();
    let mut step = init_step;
    let mut iters = 0;
    for _ in 0..cfg.max_iters {
        iters += 1;
        let gnorm = grad.norm();
        if gnorm <= cfg.tol_grad * (1.0 + loss) {
            break;
        }
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let mut w_trial = &w - step * &grad;
            problem.project(&mut w_trial);
            let trial_loss = problem.loss(&w_trial);
            if trial_loss.is_finite() && trial_loss <= loss - ARMIJO_C1 * step * gnorm * gnorm {
                w = w_trial;
                step *= STEP_GROW;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        let lg = problem.loss_grad(&w);
        loss = lg.0;
        grad = lg.1;
        if !loss.is_finite() {
            return Err(Error::Diverged("loss became non-finite".into()));
        }
        if loss < best_loss {
            best_loss = loss;
            best_w = w.clone();
        }
    }
    Ok((best_loss, best_w, iters))
}

/// Exhaustive grid minimizer of the full loss ||f(Xw) - y||^2; ties broken
/// by lexicographically smallest w.
pub fn brute_force_fit(
    x: &DesignMatrix,
    y: &DVector<f64>,
    spec: &NeuronSpec,
    boxes: &[(f64, f64)],
    step: f64,
) -> Result<DVector<f64>> {
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "y has length {}, X has {} rows",
            y.len(),
            x.nrows()
        )));
    }
    let sketch = Sketch::full_identity(x.nrows());
    let problem = SketchedProblem::new(
        x,
        &sketch,
        y.iter().copied().collect(),
        spec,
        None,
    );
    grid_minimize(&problem, boxes, step)
}

fn grid_axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let mut vals = Vec::new();
    let mut i = 0usize;
    loop {
        let v = lo + i as f64 * step;
        if v > hi + 1e-9 * step.max(1.0) {
            break;
        }
        vals.push(v);
        i += 1;
    }
    vals
}

fn grid_minimize(
    problem: &SketchedProblem,
    boxes: &[(f64, f64)],
    step: f64,
) -> Result<DVector<f64>> {
    let d = problem.dim();
    if d > 3 {
        return Err(Error::InvalidArgument(format!(
            "brute force search supports d <= 3, got {d}"
        )));
    }
    if boxes.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "{} box intervals for {d} coordinates",
            boxes.len()
        )));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("grid step must be positive".into()));
    }
    let axes: Vec<Vec<f64>> = boxes.iter().map(|&(lo, hi)| grid_axis(lo, hi, step)).collect();
    if axes.iter().any(|a| a.is_empty()) {
        return Err(Error::InvalidArgument("empty grid axis".into()));
    }
    let k = problem.rows.nrows();
    // column-major copies of the sampled rows for the partial-sum scan
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|c| (0..k).map(|j| problem.rows[(j, c)]).collect())
        .collect();
    let mut best_loss = f64::INFINITY;
    let mut best_w = vec![axes[0][0]; d];
    let mut w = vec![0.0; d];
    // partial[l][j] = sum over coords < l of cols[c][j] * w[c]
    let mut partial: Vec<Vec<f64>> = (0..=d).map(|_| vec![0.0; k]).collect();

    fn scan(
        level: usize,
        d: usize,
        axes: &[Vec<f64>],
        cols: &[Vec<f64>],
        problem: &SketchedProblem,
        w: &mut Vec<f64>,
        partial: &mut Vec<Vec<f64>>,
        best_loss: &mut f64,
        best_w: &mut Vec<f64>,
    ) {
        if level == d {
            // constraint check, then the loss with early exit
            if let Some(r2) = problem.radius_sq {
                let mut c = 0.0;
                for j in 0..partial[d].len() {
                    c += problem.weights_sq[j] * partial[d][j] * partial[d][j];
                }
                if c > r2 * (1.0 + 1e-12) {
                    return;
                }
            }
            let mut loss = 0.0;
            for j in 0..partial[d].len() {
                let r = problem.spec.eval_unchecked(partial[d][j]) - problem.y[j];
                loss += problem.weights_sq[j] * r * r;
                if loss >= *best_loss {
                    return;
                }
            }
            if loss < *best_loss {
                *best_loss = loss;
                best_w.copy_from_slice(w);
            }
            return;
        }
        for ai in 0..axes[level].len() {
            let v = axes[level][ai];
            w[level] = v;
            let (lo, hi) = partial.split_at_mut(level + 1);
            let prev = &lo[level];
            let next = &mut hi[0];
            let col = &cols[level];
            for j in 0..prev.len() {
                next[j] = prev[j] + col[j] * v;
            }
            scan(level + 1, d, axes, cols, problem, w, partial, best_loss, best_w);
        }
    }

    scan(
        0,
        d,
        &axes,
        &cols,
        problem,
        &mut w,
        &mut partial,
        &mut best_loss,
        &mut best_w,
    );
    if !best_loss.is_finite() {
        return Err(Error::NoConvergence("no finite grid point".into()));
    }
    Ok(DVector::from_vec(best_w))
}
