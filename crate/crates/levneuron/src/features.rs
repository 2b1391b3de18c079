//! Legendre-Vandermonde design matrices for bivariate total-degree
//! polynomial feature spaces over parameter rectangles.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::leverage::DesignMatrix;

/// Physical parameter rectangle [a1,b1] x [a2,b2].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamRect {
    pub lo: (f64, f64),
    pub hi: (f64, f64),
}

impl ParamRect {
    pub fn new(lo: (f64, f64), hi: (f64, f64)) -> Result<Self> {
        if !(lo.0 < hi.0 && lo.1 < hi.1) {
            return Err(Error::InvalidArgument(format!(
                "rectangle needs lo < hi per axis, got [{},{}] x [{},{}]",
                lo.0, hi.0, lo.1, hi.1
            )));
        }
        Ok(Self { lo, hi })
    }
}

/// Affine map of (u, v) into the reference square [-1,1]^2.
pub fn reference_map(rect: &ParamRect, (u, v): (f64, f64)) -> (f64, f64) {
    (
        2.0 * (u - rect.lo.0) / (rect.hi.0 - rect.lo.0) - 1.0,
        2.0 * (v - rect.lo.1) / (rect.hi.1 - rect.lo.1) - 1.0,
    )
}

/// Total-degree Legendre feature space on a rectangle.
#[derive(Debug, Clone, Copy)]
pub struct FeatureSpec {
    pub degree: usize,
    pub rect: ParamRect,
}

impl FeatureSpec {
    pub fn n_columns(&self) -> usize {
        (self.degree + 1) * (self.degree + 2) / 2
    }
}

/// P_0..P_q at x via the three-term recurrence, P_k(1) = 1 normalization.
pub fn legendre_all(x: f64, q: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(q + 1);
    p.push(1.0);
    if q >= 1 {
        p.push(x);
    }
    for k in 1..q {
        let next = ((2 * k + 1) as f64 * x * p[k] - k as f64 * p[k - 1]) / (k + 1) as f64;
        p.push(next);
    }
    p
}

/// Column (i, j) with i + j <= q holds P_i(u~) P_j(v~); columns ordered by
/// total degree, then i descending within a degree.
pub fn legendre_vandermonde(points: &[(f64, f64)], spec: &FeatureSpec) -> Result<DesignMatrix> {
    let q = spec.degree;
    let cols = spec.n_columns();
    let mut entries = DMatrix::zeros(points.len(), cols);
    for (r, &pt) in points.iter().enumerate() {
        let (ut, vt) = reference_map(&spec.rect, pt);
        if ut.abs() > 1.0 + 1e-12 || vt.abs() > 1.0 + 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "point ({}, {}) lies outside the rectangle",
                pt.0, pt.1
            )));
        }
        let pu = legendre_all(ut, q);
        let pv = legendre_all(vt, q);
        let mut c = 0;
        for t in 0..=q {
            for i in (0..=t).rev() {
                entries[(r, c)] = pu[i] * pv[t - i];
                c += 1;
            }
        }
    }
    DesignMatrix::new(entries)
}

/// Uniform tensor grid over a rectangle, endpoints included, row-major in
/// the first parameter.
pub fn tensor_grid(rect: &ParamRect, n1: usize, n2: usize) -> Vec<(f64, f64)> {
    let mut pts = Vec::with_capacity(n1 * n2);
    for i in 0..n1 {
        let u = if n1 == 1 {
            rect.lo.0
        } else {
            rect.lo.0 + (rect.hi.0 - rect.lo.0) * i as f64 / (n1 - 1) as f64
        };
        for j in 0..n2 {
            let v = if n2 == 1 {
                rect.lo.1
            } else {
                rect.lo.1 + (rect.hi.1 - rect.lo.1) * j as f64 / (n2 - 1) as f64
            };
            pts.push((u, v));
        }
    }
    pts
}
