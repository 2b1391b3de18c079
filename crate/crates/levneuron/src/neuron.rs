//! Scalar non-linearities for single neuron models, the `f(0) = 0` shift
//! transform, model evaluation, loss and (sub)gradients.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::leverage::{DesignMatrix, Sketch};

/// Arguments above this make `exp` overflow `f64`.
const EXP_GUARD: f64 = 700.0;

#[derive(Debug, Clone, PartialEq)]
pub enum NeuronKind {
    Relu,
    Abs,
    /// sigma(a) - 1/2
    SigmoidShifted,
    /// p(a) - p(0), coefficients in ascending degree order
    Poly { coeffs: Vec<f64>, interval: (f64, f64) },
    /// e^a - 1; not globally Lipschitz
    ExpShifted,
    Identity,
}

/// A non-linearity with `f(0) = 0` guaranteed via a stored shift, plus its
/// declared Lipschitz constant (`None` marks non-Lipschitz kinds).
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronSpec {
    kind: NeuronKind,
    lipschitz: Option<f64>,
    shift: f64,
}

fn sigma(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

fn poly_eval(coeffs: &[f64], a: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * a + c)
}

fn poly_deriv_coeffs(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| k as f64 * c)
        .collect()
}

impl NeuronSpec {
    pub fn relu() -> Self {
        Self { kind: NeuronKind::Relu, lipschitz: Some(1.0), shift: 0.0 }
    }

    pub fn abs() -> Self {
        Self { kind: NeuronKind::Abs, lipschitz: Some(1.0), shift: 0.0 }
    }

    pub fn identity() -> Self {
        Self { kind: NeuronKind::Identity, lipschitz: Some(1.0), shift: 0.0 }
    }

    /// sigma(a) - 1/2, so that f(0) = 0. L = 1/4.
    pub fn sigmoid_shifted() -> Self {
        Self { kind: NeuronKind::SigmoidShifted, lipschitz: Some(0.25), shift: 0.5 }
    }

    /// e^a - 1. Carries no Lipschitz constant; the norm constraint must be
    /// disabled when fitting with this kind.
    pub fn exp_shifted() -> Self {
        Self { kind: NeuronKind::ExpShifted, lipschitz: None, shift: 1.0 }
    }

    /// Polynomial p(a) - p(0). L is max |p'| over the declared interval.
    pub fn poly(coeffs: Vec<f64>, interval: (f64, f64)) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidArgument("poly needs at least one coefficient".into()));
        }
        if !(interval.0 < interval.1) {
            return Err(Error::InvalidArgument("poly interval must satisfy lo < hi".into()));
        }
        let shift = coeffs[0];
        let dp = poly_deriv_coeffs(&coeffs);
        // max |p'| by dense sampling of the interval
        let grid = 20_001;
        let mut l = 0.0f64;
        for i in 0..grid {
            let a = interval.0 + (interval.1 - interval.0) * i as f64 / (grid - 1) as f64;
            l = l.max(poly_eval(&dp, a).abs());
        }
        Ok(Self {
            kind: NeuronKind::Poly { coeffs, interval },
            lipschitz: Some(l),
            shift,
        })
    }

    /// Raw (unshifted) variant of a kind, used as input to [`shift_transform`].
    pub fn raw(kind: NeuronKind) -> Self {
        let lipschitz = match &kind {
            NeuronKind::Relu | NeuronKind::Abs | NeuronKind::Identity => Some(1.0),
            NeuronKind::SigmoidShifted => Some(0.25),
            NeuronKind::ExpShifted => None,
            NeuronKind::Poly { coeffs, interval } => {
                let dp = poly_deriv_coeffs(coeffs);
                let grid = 20_001;
                let mut l = 0.0f64;
                for i in 0..grid {
                    let a = interval.0 + (interval.1 - interval.0) * i as f64 / (grid - 1) as f64;
                    l = l.max(poly_eval(&dp, a).abs());
                }
                Some(l)
            }
        };
        Self { kind, lipschitz, shift: 0.0 }
    }

    /// Parse `relu|abs|sigmoid|poly:<degree>:<c0,c1,...>|exp|identity`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Self::relu()),
            "abs" => Ok(Self::abs()),
            "sigmoid" => Ok(Self::sigmoid_shifted()),
            "exp" => Ok(Self::exp_shifted()),
            "identity" => Ok(Self::identity()),
            _ if s.starts_with("poly:") => {
                let parts: Vec<&str> = s.splitn(3, ':').collect();
                if parts.len() != 3 {
                    return Err(Error::Parse(format!("bad poly spec `{s}`")));
                }
                let degree: usize = parts[1]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad poly degree in `{s}`")))?;
                let coeffs: Vec<f64> = parts[2]
                    .split(',')
                    .map(|c| c.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Parse(format!("bad poly coefficients in `{s}`")))?;
                if coeffs.len() != degree + 1 {
                    return Err(Error::Parse(format!(
                        "poly degree {degree} expects {} coefficients, got {}",
                        degree + 1,
                        coeffs.len()
                    )));
                }
                Self::poly(coeffs, (-1.0, 1.0))
            }
            _ => Err(Error::Parse(format!("unknown non-linearity `{s}`"))),
        }
    }

    pub fn kind(&self) -> &NeuronKind {
        &self.kind
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Declared Lipschitz constant, `None` for non-Lipschitz kinds.
    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    /// Unshifted base function value.
    fn base(&self, a: f64) -> f64 {
        match &self.kind {
            NeuronKind::Relu => a.max(0.0),
            NeuronKind::Abs => a.abs(),
            NeuronKind::SigmoidShifted => sigma(a),
            NeuronKind::Poly { coeffs, .. } => poly_eval(coeffs, a),
            NeuronKind::ExpShifted => a.exp(),
            NeuronKind::Identity => a,
        }
    }

    /// f(a). Errors on exp overflow.
    pub fn eval(&self, a: f64) -> Result<f64> {
        if matches!(self.kind, NeuronKind::ExpShifted) && a > EXP_GUARD {
            return Err(Error::Overflow(a));
        }
        Ok(self.base(a) - self.shift)
    }

    /// f(a) without the overflow guard; may return +inf. Used by solvers,
    /// which treat non-finite losses as rejected steps.
    pub fn eval_unchecked(&self, a: f64) -> f64 {
        self.base(a) - self.shift
    }

    /// Subgradient f'(a). ReLU and abs use 0 at the kink.
    pub fn deriv(&self, a: f64) -> f64 {
        match &self.kind {
            NeuronKind::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            NeuronKind::Abs => {
                if a > 0.0 {
                    1.0
                } else if a < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            NeuronKind::SigmoidShifted => {
                let s = sigma(a);
                s * (1.0 - s)
            }
            NeuronKind::Poly { coeffs, .. } => poly_eval(&poly_deriv_coeffs(coeffs), a),
            NeuronKind::ExpShifted => a.exp(),
            NeuronKind::Identity => 1.0,
        }
    }

    /// Approximate inverse f^{-1}(y), used only to warm-start the
    /// non-convex solver; kinds without a usable inverse fall back to y.
    pub fn invert_approx(&self, y: f64) -> f64 {
        let base_target = y + self.shift;
        match &self.kind {
            NeuronKind::Identity | NeuronKind::Relu | NeuronKind::Abs => base_target,
            NeuronKind::SigmoidShifted => {
                let p = base_target.clamp(1e-6, 1.0 - 1e-6);
                (p / (1.0 - p)).ln()
            }
            NeuronKind::ExpShifted => base_target.max(1e-3).ln(),
            NeuronKind::Poly { .. } => y,
        }
    }
}

/// Turn a raw spec with `f(0) = c` into an equivalent shifted problem:
/// `f'(x) = f(x) - c`, `y' = y - c`. Losses agree for every `w`.
pub fn shift_transform(raw: &NeuronSpec, y: &DVector<f64>) -> (NeuronSpec, DVector<f64>) {
    let c = raw.eval_unchecked(0.0);
    let mut spec = raw.clone();
    spec.shift += c;
    let y_shifted = y.map(|v| v - c);
    (spec, y_shifted)
}

/// Entrywise f applied to Xw.
pub fn predict(x: &DesignMatrix, w: &DVector<f64>, spec: &NeuronSpec) -> Result<DVector<f64>> {
    if w.len() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "w has length {}, X has {} columns",
            w.len(),
            x.ncols()
        )));
    }
    let xw = x.entries() * w;
    xw.iter().map(|&a| spec.eval(a)).collect::<Result<Vec<_>>>().map(DVector::from_vec)
}

/// Loss `||f(Xw) - y||^2` and subgradient `2 X^T D r`, optionally restricted
/// to a sketch (rows selected and scaled by weight^2).
pub fn loss_and_subgradient(
    x: &DesignMatrix,
    w: &DVector<f64>,
    y: &DVector<f64>,
    spec: &NeuronSpec,
    sketch: Option<&Sketch>,
) -> Result<(f64, DVector<f64>)> {
    let (n, d) = (x.nrows(), x.ncols());
    if w.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "w has length {}, X has {d} columns",
            w.len()
        )));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "y has length {}, X has {n} rows",
            y.len()
        )));
    }
    let xw = x.entries() * w;
    let mut loss = 0.0;
    let mut grad = DVector::zeros(d);
    let mut accumulate = |i: usize, scale: f64| -> Result<()> {
        let a = xw[i];
        let r = spec.eval(a)? - y[i];
        loss += scale * r * r;
        let g = 2.0 * scale * spec.deriv(a) * r;
        for j in 0..d {
            grad[j] += g * x.entries()[(i, j)];
        }
        Ok(())
    };
    match sketch {
        None => {
            for i in 0..n {
                accumulate(i, 1.0)?;
            }
        }
        Some(sk) => {
            if sk.n() != n {
                return Err(Error::DimensionMismatch(format!(
                    "sketch targets {} rows, X has {n}",
                    sk.n()
                )));
            }
            for (idx, wgt) in sk.indices().iter().zip(sk.weights()) {
                accumulate(*idx, wgt * wgt)?;
            }
        }
    }
    Ok((loss, grad))
}

/// Convenience: full loss only, `||f(Xw) - y||^2`.
pub fn full_loss(
    x: &DesignMatrix,
    w: &DVector<f64>,
    y: &DVector<f64>,
    spec: &NeuronSpec,
) -> Result<f64> {
    Ok(loss_and_subgradient(x, w, y, spec, None)?.0)
}

/// Relative error `||f(Xw) - y||^2 / ||y||^2`.
pub fn relative_error(
    x: &DesignMatrix,
    w: &DVector<f64>,
    y: &DVector<f64>,
    spec: &NeuronSpec,
) -> Result<f64> {
    Ok(full_loss(x, w, y, spec)? / y.norm_squared())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, DMatrix};

    fn design(entries: DMatrix<f64>) -> DesignMatrix {
        DesignMatrix::new(entries).unwrap()
    }
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_lipschitz_kinds() -> Vec<NeuronSpec> {
        vec![
            NeuronSpec::relu(),
            NeuronSpec::abs(),
            NeuronSpec::sigmoid_shifted(),
            NeuronSpec::identity(),
            NeuronSpec::poly(vec![0.0, 1.0, 0.5], (-100.0, 100.0)).unwrap(),
        ]
    }

    #[test]
    fn f_zero_is_zero_for_every_kind() {
        let mut kinds = all_lipschitz_kinds();
        kinds.push(NeuronSpec::exp_shifted());
        kinds.push(NeuronSpec::poly(vec![3.0, 1.0, -2.0], (-1.0, 1.0)).unwrap());
        for spec in kinds {
            assert_eq!(spec.eval(0.0).unwrap(), 0.0, "{:?}", spec.kind());
        }
    }

    #[test]
    fn relu_basics() {
        let relu = NeuronSpec::relu();
        assert_eq!(relu.eval(-1.0).unwrap(), 0.0);
        assert_eq!(relu.eval(0.0).unwrap(), 0.0);
        assert_eq!(relu.eval(2.5).unwrap(), 2.5);
    }

    #[test]
    fn sigmoid_shifted_at_zero() {
        assert_eq!(NeuronSpec::sigmoid_shifted().eval(0.0).unwrap(), 0.0);
    }

    #[test]
    fn exp_overflow_guard() {
        let exp = NeuronSpec::exp_shifted();
        assert!(exp.eval(701.0).is_err());
        assert!((exp.eval(1.0).unwrap() - (1f64.exp() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn lipschitz_probe_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for spec in all_lipschitz_kinds() {
            let l = spec.lipschitz().unwrap();
            for _ in 0..10_000 {
                let a = rng.random_range(-100.0..100.0);
                let b = rng.random_range(-100.0..100.0);
                let lhs = (spec.eval(a).unwrap() - spec.eval(b).unwrap()).abs();
                assert!(
                    lhs <= l * (a - b).abs() + 1e-9,
                    "{:?}: |f({a})-f({b})| = {lhs} > L|a-b| = {}",
                    spec.kind(),
                    l * (a - b).abs()
                );
            }
        }
    }

    #[test]
    fn shift_transform_sigmoid_example() {
        let raw = NeuronSpec::raw(NeuronKind::SigmoidShifted);
        let y = DVector::from_vec(vec![1.0, 0.0]);
        let (spec, y2) = shift_transform(&raw, &y);
        assert_eq!(y2.as_slice(), &[0.5, -0.5]);
        assert_eq!(spec.eval(0.0).unwrap(), 0.0);
    }

    #[test]
    fn shift_transform_identity_noop() {
        let raw = NeuronSpec::raw(NeuronKind::Identity);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let (_, y2) = shift_transform(&raw, &y);
        assert_eq!(y2, y);
    }

    #[test]
    fn shift_transform_preserves_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = design(DMatrix::from_fn(30, 3, |_, _| rng.random_range(-1.0..1.0)));
        let y = DVector::from_fn(30, |_, _| rng.random_range(-1.0..1.0f64));
        let raw = NeuronSpec::raw(NeuronKind::ExpShifted);
        let (spec, y2) = shift_transform(&raw, &y);
        for _ in 0..5 {
            let w = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0f64));
            let l_raw = full_loss(&x, &w, &y, &raw).unwrap();
            let l_shift = full_loss(&x, &w, &y2, &spec).unwrap();
            assert!((l_raw - l_shift).abs() <= 1e-12 * (1.0 + l_raw));
        }
    }

    #[test]
    fn predict_zero_weight_is_zero() {
        let x = design(dmatrix![1.0, -1.0; 0.5, 2.0]);
        let w = DVector::zeros(2);
        for spec in all_lipschitz_kinds() {
            let p = predict(&x, &w, &spec).unwrap();
            assert!(p.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn predict_relu_negative_activation() {
        let x = design(dmatrix![1.0, -1.0; 0.0, 1.0]);
        let w = DVector::from_vec(vec![1.0, 2.0]);
        let p = predict(&x, &w, &NeuronSpec::relu()).unwrap();
        assert_eq!(p[0], 0.0); // <x, w> = -1
        assert_eq!(p[1], 2.0);
    }

    #[test]
    fn predict_identity_is_xw() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = design(DMatrix::from_fn(20, 4, |_, _| rng.random_range(-1.0..1.0)));
        let w = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0f64));
        let p = predict(&x, &w, &NeuronSpec::identity()).unwrap();
        assert_eq!(p, x.entries() * &w);
    }

    /// Central finite differences on the full loss.
    fn fd_grad(
        x: &DesignMatrix,
        w: &DVector<f64>,
        y: &DVector<f64>,
        spec: &NeuronSpec,
        h: f64,
    ) -> DVector<f64> {
        let d = w.len();
        DVector::from_fn(d, |j, _| {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[j] += h;
            wm[j] -= h;
            (full_loss(x, &wp, y, spec).unwrap() - full_loss(x, &wm, y, spec).unwrap()) / (2.0 * h)
        })
    }

    #[test]
    fn identity_gradient_matches_closed_form_and_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = design(DMatrix::from_fn(40, 3, |_, _| rng.random_range(-1.0..1.0)));
        let y = DVector::from_fn(40, |_, _| rng.random_range(-1.0..1.0f64));
        let w = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0f64));
        let spec = NeuronSpec::identity();
        let (_, g) = loss_and_subgradient(&x, &w, &y, &spec, None).unwrap();
        let closed = 2.0 * x.entries().transpose() * (x.entries() * &w - &y);
        assert!((&g - &closed).norm() <= 1e-10 * (1.0 + closed.norm()));
        let fd = fd_grad(&x, &w, &y, &spec, 1e-6);
        assert!((&g - &fd).norm() <= 1e-5 * (1.0 + fd.norm()));
    }

    #[test]
    fn optimum_of_realizable_problem_has_zero_loss_and_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = design(DMatrix::from_fn(50, 3, |_, _| rng.random_range(-1.0..1.0)));
        let w_star = DVector::from_vec(vec![0.4, 0.4, -0.4]);
        let spec = NeuronSpec::relu();
        let y = predict(&x, &w_star, &spec).unwrap();
        let (loss, grad) = loss_and_subgradient(&x, &w_star, &y, &spec, None).unwrap();
        assert!(loss.abs() < 1e-24);
        assert!(grad.norm() < 1e-12);
    }

    #[test]
    fn relu_gradient_matches_fd_away_from_kinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let spec = NeuronSpec::relu();
        let mut checked = 0;
        while checked < 20 {
            let x = design(DMatrix::from_fn(30, 3, |_, _| rng.random_range(-1.0..1.0)));
            let y = DVector::from_fn(30, |_, _| rng.random_range(-1.0..1.0f64));
            let w = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0f64));
            let xw = x.entries() * &w;
            if xw.iter().any(|a| a.abs() < 1e-3) {
                continue;
            }
            let (_, g) = loss_and_subgradient(&x, &w, &y, &spec, None).unwrap();
            let fd = fd_grad(&x, &w, &y, &spec, 1e-6);
            assert!((&g - &fd).norm() <= 1e-4 * (1.0 + fd.norm()));
            checked += 1;
        }
    }

    #[test]
    fn parse_round_trip_names() {
        assert!(NeuronSpec::parse("relu").is_ok());
        assert!(NeuronSpec::parse("abs").is_ok());
        assert!(NeuronSpec::parse("sigmoid").is_ok());
        assert!(NeuronSpec::parse("exp").is_ok());
        assert!(NeuronSpec::parse("identity").is_ok());
        let p = NeuronSpec::parse("poly:2:0,0,1").unwrap();
        assert_eq!(p.eval(2.0).unwrap(), 4.0);
        assert!(NeuronSpec::parse("poly:2:1,2").is_err());
        assert!(NeuronSpec::parse("swish").is_err());
    }
}
