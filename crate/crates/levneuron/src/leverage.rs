//! Statistical leverage scores, sampling plans, and importance-sampling
//! sketches, plus empirical checks of the sketching concentration statements.

use nalgebra::{DMatrix, DVector};
use once_cell::sync::OnceCell;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::neuron::NeuronSpec;

/// Singular values below `RANK_TOL * sigma_max` are treated as zero.
const RANK_TOL: f64 = 1e-10;

/// Dense n x d design matrix with a lazily computed, cached orthonormal
/// factor of its column space.
#[derive(Debug)]
pub struct DesignMatrix {
    entries: DMatrix<f64>,
    ortho: OnceCell<OrthoFactor>,
}

#[derive(Debug)]
struct OrthoFactor {
    /// n x rank, orthonormal columns spanning col(X).
    q: DMatrix<f64>,
    rank: usize,
}

impl DesignMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let (n, d) = entries.shape();
        if d < 1 || n < d {
            return Err(Error::InvalidArgument(format!(
                "design matrix needs n >= d >= 1, got {n} x {d}"
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("design matrix has non-finite entries".into()));
        }
        Ok(Self { entries, ortho: OnceCell::new() })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    fn factor(&self) -> &OrthoFactor {
        self.ortho.get_or_init(|| {
            let svd = self.entries.clone().svd(true, false);
            let u = svd.u.expect("svd requested u");
            let smax = svd.singular_values.max();
            let rank = if smax <= 0.0 {
                0
            } else {
                svd.singular_values.iter().filter(|&&s| s >= RANK_TOL * smax).count()
            };
            let q = u.columns(0, rank).into_owned();
            OrthoFactor { q, rank }
        })
    }

    /// Numerical rank (singular values >= 1e-10 of the largest).
    pub fn rank(&self) -> usize {
        self.factor().rank
    }

    /// n x rank matrix with orthonormal columns spanning col(X).
    pub fn ortho_factor(&self) -> &DMatrix<f64> {
        &self.factor().q
    }
}

/// Leverage scores tau_i in [0,1]; their sum equals rank(X).
#[derive(Debug, Clone)]
pub struct LeverageScores {
    pub tau: Vec<f64>,
    pub total: f64,
}

/// tau_i = squared Euclidean norm of row i of the orthonormal factor.
/// Rank deficiency is handled by pseudoinverse semantics; an all-zero row
/// gets tau = 0.
pub fn leverage_scores(x: &DesignMatrix) -> LeverageScores {
    let q = x.ortho_factor();
    let tau: Vec<f64> = (0..q.nrows()).map(|i| q.row(i).norm_squared().clamp(0.0, 1.0)).collect();
    let total = tau.iter().sum();
    LeverageScores { tau, total }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanKind {
    Leverage,
    Uniform,
}

/// Probability vector over the n rows of a design matrix.
#[derive(Debug, Clone)]
pub struct SamplingPlan {
    pub p: Vec<f64>,
    pub kind: PlanKind,
}

impl SamplingPlan {
    /// p_i = tau_i / sum tau_j.
    pub fn from_scores(scores: &LeverageScores) -> Result<Self> {
        if scores.total <= 0.0 {
            return Err(Error::DegenerateDesign);
        }
        let p = scores.tau.iter().map(|t| t / scores.total).collect();
        Ok(Self { p, kind: PlanKind::Leverage })
    }

    /// p_i = 1/n, the baseline method.
    pub fn uniform(n: usize) -> Self {
        Self { p: vec![1.0 / n as f64; n], kind: PlanKind::Uniform }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

/// m i.i.d.-with-replacement row draws with reweighting 1/sqrt(m p_i);
/// the sampling matrix S is applied implicitly through `indices`/`weights`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sketch {
    indices: Vec<usize>,
    weights: Vec<f64>,
    n: usize,
    seed: u64,
}

impl Sketch {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn m(&self) -> usize {
        self.indices.len()
    }

    /// Row count of the matrix the sketch applies to.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A "sketch" that keeps every row once with weights that make S the
    /// identity under the given plan semantics (weight_i = 1 for all i).
    /// Useful as the m -> full limit in tests.
    pub fn full_identity(n: usize) -> Self {
        Self { indices: (0..n).collect(), weights: vec![1.0; n], n, seed: 0 }
    }
}

/// Draw m i.i.d. categorical samples from the plan; deterministic given seed.
pub fn draw_sketch(plan: &SamplingPlan, m: usize, seed: u64) -> Result<Sketch> {
    if m < 1 {
        return Err(Error::InvalidArgument("sketch needs m >= 1".into()));
    }
    let n = plan.len();
    let mut cdf = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &p in &plan.p {
        acc += p;
        cdf.push(acc);
    }
    let total = acc;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for _ in 0..m {
        let u: f64 = rng.random_range(0.0..total);
        let i = cdf.partition_point(|&c| c <= u).min(n - 1);
        indices.push(i);
        weights.push(1.0 / (m as f64 * plan.p[i]).sqrt());
    }
    Ok(Sketch { indices, weights, n, seed })
}

/// output_j = weight_j * z_{indices_j}.
pub fn apply_sketch(sk: &Sketch, z: &DVector<f64>) -> Result<DVector<f64>> {
    if z.len() != sk.n {
        return Err(Error::DimensionMismatch(format!(
            "sketch targets length-{} vectors, got {}",
            sk.n,
            z.len()
        )));
    }
    Ok(DVector::from_iterator(
        sk.m(),
        sk.indices.iter().zip(&sk.weights).map(|(&i, &w)| w * z[i]),
    ))
}

/// The m x rank matrix S*Q, rows weight_j * Q.row(indices_j).
fn sketch_rows(sk: &Sketch, q: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(sk.m(), q.ncols());
    for (j, (&i, &w)) in sk.indices.iter().zip(&sk.weights).enumerate() {
        for c in 0..q.ncols() {
            out[(j, c)] = w * q[(i, c)];
        }
    }
    out
}

/// Subspace-embedding distortion of the sketch: with Q the orthonormal
/// factor of X, returns max(|sigma_max^2 - 1|, |sigma_min^2 - 1|) of S*Q.
pub fn embedding_distortion(x: &DesignMatrix, sk: &Sketch) -> Result<f64> {
    if sk.n != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "sketch targets {} rows, X has {}",
            sk.n,
            x.nrows()
        )));
    }
    let sq = sketch_rows(sk, x.ortho_factor());
    let svd = sq.svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    Ok((smax * smax - 1.0).abs().max((smin * smin - 1.0).abs()))
}

/// Empirical check of the pairwise distortion bound: returns
/// (|  ||S f(Xw1) - S f(Xw2)||^2 - ||f(Xw1) - f(Xw2)||^2 |,
///  eps L^2 ||Xw1 - Xw2||^2)  with eps = sqrt(3 d log(2/delta) / m),
/// delta = 0.05.
pub fn lipschitz_distortion_check(
    x: &DesignMatrix,
    w1: &DVector<f64>,
    w2: &DVector<f64>,
    spec: &NeuronSpec,
    sk: &Sketch,
) -> Result<(f64, f64)> {
    let l = spec.lipschitz().ok_or_else(|| {
        Error::InvalidArgument("lipschitz_distortion_check needs a Lipschitz kind".into())
    })?;
    let xw1 = x.entries() * w1;
    let xw2 = x.entries() * w2;
    let u = DVector::from_iterator(
        x.nrows(),
        xw1.iter().zip(xw2.iter()).map(|(&a, &b)| spec.eval_unchecked(a) - spec.eval_unchecked(b)),
    );
    let su = apply_sketch(sk, &u)?;
    let lhs = (su.norm_squared() - u.norm_squared()).abs();
    let delta: f64 = 0.05;
    let eps = (3.0 * x.ncols() as f64 * (2.0 / delta).ln() / sk.m() as f64).sqrt();
    let rhs = eps * l * l * (&xw1 - &xw2).norm_squared();
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    fn design(entries: DMatrix<f64>) -> DesignMatrix {
        DesignMatrix::new(entries).unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_rows_have_unit_leverage() {
        let x = design(dmatrix![1.0, 0.0; 0.0, 1.0]);
        let s = leverage_scores(&x);
        assert!((s.tau[0] - 1.0).abs() < 1e-12);
        assert!((s.tau[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn three_row_example_matches_direct_evaluation() {
        // x_i^T (X^T X)^{-1} x_i with X^T X = [[2,1],[1,2]] gives 2/3 each
        let x = design(dmatrix![1.0, 0.0; 0.0, 1.0; 1.0, 1.0]);
        let s = leverage_scores(&x);
        for t in &s.tau {
            assert!((t - 2.0 / 3.0).abs() < 1e-12, "tau = {t}");
        }
        assert!((s.total - 2.0).abs() < 1e-12);
    }

    #[test]
    fn scores_sum_to_rank_including_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // full rank
        let x = design(random_matrix(&mut rng, 120, 7));
        let s = leverage_scores(&x);
        assert_eq!(x.rank(), 7);
        assert!((s.total - 7.0).abs() <= 1e-8 * 7.0);
        // rank deficient: duplicate a column
        let mut e = random_matrix(&mut rng, 80, 5);
        let c0 = e.column(0).into_owned();
        e.set_column(4, &c0);
        let x = design(e);
        let s = leverage_scores(&x);
        assert_eq!(x.rank(), 4);
        assert!((s.total - 4.0).abs() <= 1e-8 * 4.0);
        // all-zero row keeps tau = 0
        let mut e = random_matrix(&mut rng, 40, 3);
        e.row_mut(7).fill(0.0);
        let s = leverage_scores(&design(e));
        assert_eq!(s.tau[7], 0.0);
    }

    #[test]
    fn scores_match_explicit_gram_inverse_on_full_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = random_matrix(&mut rng, 60, 4);
        let gram_inv = (e.transpose() * &e).try_inverse().unwrap();
        let x = design(e.clone());
        let s = leverage_scores(&x);
        for i in 0..60 {
            let xi = e.row(i).transpose();
            let direct = (xi.transpose() * &gram_inv * &xi)[(0, 0)];
            assert!((s.tau[i] - direct).abs() <= 1e-8, "row {i}");
        }
    }

    #[test]
    fn scores_invariant_under_right_multiplication() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = random_matrix(&mut rng, 50, 4);
        let r = random_matrix(&mut rng, 4, 4);
        assert!(r.clone().try_inverse().is_some());
        let s1 = leverage_scores(&design(e.clone()));
        let s2 = leverage_scores(&design(&e * &r));
        for (a, b) in s1.tau.iter().zip(&s2.tau) {
            assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn plan_normalizes_scores() {
        let s = LeverageScores { tau: vec![2.0 / 3.0; 3], total: 2.0 };
        let plan = SamplingPlan::from_scores(&s).unwrap();
        for p in &plan.p {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = LeverageScores { tau: vec![1.0, 0.5, 0.5], total: 2.0 };
        let plan = SamplingPlan::from_scores(&s).unwrap();
        assert_eq!(plan.p, vec![0.5, 0.25, 0.25]);
    }

    #[test]
    fn uniform_plan() {
        let plan = SamplingPlan::uniform(4);
        assert_eq!(plan.p, vec![0.25; 4]);
        assert_eq!(plan.kind, PlanKind::Uniform);
    }

    #[test]
    fn zero_scores_are_rejected() {
        let s = LeverageScores { tau: vec![0.0; 3], total: 0.0 };
        assert!(SamplingPlan::from_scores(&s).is_err());
    }

    #[test]
    fn sketch_weights_uniform_plan() {
        let plan = SamplingPlan::uniform(4);
        let sk = draw_sketch(&plan, 2, 0).unwrap();
        for w in sk.weights() {
            assert!((w - 2f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn sketch_degenerate_plan_always_draws_row_zero() {
        let plan = SamplingPlan { p: vec![1.0, 0.0, 0.0], kind: PlanKind::Leverage };
        let sk = draw_sketch(&plan, 3, 42).unwrap();
        assert_eq!(sk.indices(), &[0, 0, 0]);
        for w in sk.weights() {
            assert!((w - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn sketch_is_deterministic_in_seed() {
        let plan = SamplingPlan::uniform(100);
        let a = draw_sketch(&plan, 50, 7).unwrap();
        let b = draw_sketch(&plan, 50, 7).unwrap();
        assert_eq!(a, b);
        let c = draw_sketch(&plan, 50, 8).unwrap();
        assert_ne!(a.indices(), c.indices());
    }

    #[test]
    fn apply_sketch_selects_and_scales() {
        let sk = Sketch { indices: vec![1], weights: vec![2f64.sqrt()], n: 3, seed: 0 };
        let z = DVector::from_vec(vec![0.0, 5.0, 0.0]);
        let out = apply_sketch(&sk, &z).unwrap();
        assert!((out[0] - 5.0 * 2f64.sqrt()).abs() < 1e-15);
        let zero = DVector::zeros(3);
        assert_eq!(apply_sketch(&sk, &zero).unwrap(), DVector::zeros(1));
        assert!(apply_sketch(&sk, &DVector::zeros(4)).is_err());
    }

    #[test]
    fn sketch_norm_is_unbiased_monte_carlo() {
        // mean of ||Sz||^2 over 10^4 sketches within 2% of ||z||^2
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100;
        let x = design(random_matrix(&mut rng, n, 5));
        let plan = SamplingPlan::from_scores(&leverage_scores(&x)).unwrap();
        let z = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0f64));
        let target = z.norm_squared();
        let mut mean = 0.0;
        let trials = 10_000;
        for t in 0..trials {
            let sk = draw_sketch(&plan, 10, 1000 + t).unwrap();
            mean += apply_sketch(&sk, &z).unwrap().norm_squared();
        }
        mean /= trials as f64;
        assert!(
            (mean - target).abs() <= 0.02 * target,
            "mean {mean} vs ||z||^2 {target}"
        );
    }

    #[test]
    fn full_identity_sketch_has_zero_distortion() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = design(random_matrix(&mut rng, 50, 4));
        let sk = Sketch::full_identity(50);
        let gamma = embedding_distortion(&x, &sk).unwrap();
        assert!(gamma <= 1e-10, "gamma = {gamma}");
    }

    #[test]
    fn distortion_shrinks_with_more_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = design(random_matrix(&mut rng, 1000, 5));
        let plan = SamplingPlan::from_scores(&leverage_scores(&x)).unwrap();
        let median = |m: usize| {
            let mut g: Vec<f64> = (0..21)
                .map(|s| {
                    let sk = draw_sketch(&plan, m, 100 * m as u64 + s).unwrap();
                    embedding_distortion(&x, &sk).unwrap()
                })
                .collect();
            g.sort_by(|a, b| a.partial_cmp(b).unwrap());
            g[10]
        };
        let (g50, g200, g800) = (median(50), median(200), median(800));
        assert!(g50 > g200 && g200 > g800, "medians {g50} {g200} {g800}");
    }

    #[test]
    fn lipschitz_check_zero_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = design(random_matrix(&mut rng, 100, 3));
        let plan = SamplingPlan::from_scores(&leverage_scores(&x)).unwrap();
        let sk = draw_sketch(&plan, 30, 1).unwrap();
        let w = DVector::from_vec(vec![0.3, -0.2, 0.5]);
        let (lhs, rhs) = lipschitz_distortion_check(&x, &w, &w, &NeuronSpec::relu(), &sk).unwrap();
        assert_eq!(lhs, 0.0);
        assert!(rhs >= 0.0);
    }

    #[test]
    fn bernstein_bound_holds_most_of_the_time() {
        // identity f, eps = 0.5, delta = 0.05 => m = ceil(3 d log(40) / 0.25)
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = 3;
        let x = design(random_matrix(&mut rng, 500, d));
        let plan = SamplingPlan::from_scores(&leverage_scores(&x)).unwrap();
        let m = (3.0 * d as f64 * 40f64.ln() / 0.25).ceil() as usize;
        let w1 = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0f64));
        let w2 = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0f64));
        for spec in [NeuronSpec::identity(), NeuronSpec::relu()] {
            let mut violations = 0;
            for s in 0..100 {
                let sk = draw_sketch(&plan, m, 7000 + s).unwrap();
                let (lhs, rhs) = lipschitz_distortion_check(&x, &w1, &w2, &spec, &sk).unwrap();
                if lhs > rhs {
                    violations += 1;
                }
            }
            assert!(violations <= 10, "{:?}: {violations} violations", spec.kind());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn tau_bounds_and_sum(seed in 0u64..1000, n in 5usize..60, d in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = n.max(d);
            let x = design(random_matrix(&mut rng, n, d));
            let s = leverage_scores(&x);
            for t in &s.tau {
                prop_assert!((0.0..=1.0).contains(t));
            }
            let r = x.rank() as f64;
            prop_assert!((s.total - r).abs() <= 1e-8 * r.max(1.0));
        }

        #[test]
        fn plan_sums_to_one(seed in 0u64..1000, n in 3usize..50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = 3.min(n);
            let x = design(random_matrix(&mut rng, n, d));
            let plan = SamplingPlan::from_scores(&leverage_scores(&x)).unwrap();
            let sum: f64 = plan.p.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(plan.p.iter().all(|&p| p >= 0.0));
        }
    }
}
