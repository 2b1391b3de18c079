//! Numerical solvers for the three parametric test problems and their
//! quantities of interest; backs the query oracle in experiments.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::features::{legendre_vandermonde, tensor_grid, FeatureSpec, ParamRect};
use crate::leverage::DesignMatrix;

// ---------------------------------------------------------------- oscillator

/// Damped driven oscillator x'' + c x' + k x = f cos(omega t).
#[derive(Debug, Clone, Copy)]
pub struct OscillatorParams {
    pub c: f64,
    pub k: f64,
    pub f: f64,
    pub omega: f64,
    pub x0: f64,
    pub x1: f64,
    pub t_end: f64,
    pub dt: f64,
}

impl OscillatorParams {
    /// The swept experiment fixes (c, f, x0, x1) and varies (k, omega).
    pub fn swept(k: f64, omega: f64) -> Self {
        Self { c: 1.0, k, f: 1.0, omega, x0: 0.0, x1: 0.0, t_end: 20.0, dt: 1e-3 }
    }
}

/// Max |x(t)| over [0, t_end], classical RK4 at fixed dt.
pub fn oscillator_qoi(p: &OscillatorParams) -> Result<f64> {
    if !(p.dt > 0.0 && p.t_end > 0.0) {
        return Err(Error::InvalidArgument("oscillator needs dt > 0 and t_end > 0".into()));
    }
    let accel = |t: f64, x: f64, v: f64| p.f * (p.omega * t).cos() - p.c * v - p.k * x;
    let steps = (p.t_end / p.dt).round() as usize;
    let dt = p.t_end / steps as f64;
    let (mut x, mut v) = (p.x0, p.x1);
    let mut max_disp = x.abs();
    let mut t = 0.0;
    for _ in 0..steps {
        let (k1x, k1v) = (v, accel(t, x, v));
        let (k2x, k2v) = (v + 0.5 * dt * k1v, accel(t + 0.5 * dt, x + 0.5 * dt * k1x, v + 0.5 * dt * k1v));
        let (k3x, k3v) = (v + 0.5 * dt * k2v, accel(t + 0.5 * dt, x + 0.5 * dt * k2x, v + 0.5 * dt * k2v));
        let (k4x, k4v) = (v + dt * k3v, accel(t + dt, x + dt * k3x, v + dt * k3v));
        x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        t += dt;
        if !x.is_finite() || !v.is_finite() {
            return Err(Error::BlowUp(p.k, p.omega));
        }
        max_disp = max_disp.max(x.abs());
    }
    Ok(max_disp)
}

// ---------------------------------------------------------------------- heat

/// How to interpret the right boundary condition
/// `pi e^{-t} + d u(1,t)/dt = 0`, which is ambiguous as written.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryReading {
    /// Flux condition u_x(1,t) = -pi e^{-t} (the default reading).
    Flux,
    /// Literal time-derivative condition, i.e. the prescribed value
    /// u(1,t) = sin(omega pi) + pi (e^{-t} - 1).
    TimeDerivative,
}

/// Heat problem pi u_t = u_xx on [0,1], u(0,t) = 0, u(x,0) = sin(omega pi x).
#[derive(Debug, Clone, Copy)]
pub struct HeatParams {
    pub omega: f64,
    pub t_eval: f64,
    pub nx: usize,
    pub dt: f64,
    pub boundary: BoundaryReading,
}

impl HeatParams {
    pub fn swept(t_eval: f64, omega: f64) -> Self {
        Self { omega, t_eval, nx: 201, dt: 1e-3, boundary: BoundaryReading::Flux }
    }
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = if i < n - 1 { upper[i] / m } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Max over the spatial grid of u(x, t_eval); Crank-Nicolson in time,
/// second-order central differences in space.
pub fn heat_qoi(p: &HeatParams) -> Result<f64> {
    if p.nx < 3 {
        return Err(Error::InvalidArgument("heat grid needs nx >= 3".into()));
    }
    if !(p.dt > 0.0) || p.t_eval < 0.0 {
        return Err(Error::InvalidArgument("heat needs dt > 0 and t_eval >= 0".into()));
    }
    let big_n = p.nx - 1;
    let h = 1.0 / big_n as f64;
    let pi = std::f64::consts::PI;
    // u over full grid, u[0] pinned to 0
    let mut u: Vec<f64> = (0..p.nx).map(|i| (p.omega * pi * i as f64 * h).sin()).collect();
    u[0] = 0.0;
    if p.t_eval == 0.0 {
        return Ok(u.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }
    let steps = (p.t_eval / p.dt).ceil() as usize;
    let dt = p.t_eval / steps as f64;
    let lam = dt / (2.0 * pi * h * h);
    let flux = |t: f64| -pi * (-t).exp();
    let u1_initial = (p.omega * pi).sin();
    let dirichlet = |t: f64| u1_initial + pi * ((-t).exp() - 1.0);

    match p.boundary {
        BoundaryReading::Flux => {
            // unknowns u_1..u_N; last row uses the ghost-node flux stencil
            let n = big_n;
            let mut lower = vec![lam; n];
            let mut diag = vec![1.0 + 2.0 * lam; n];
            let upper = vec![lam; n];
            lower[n - 1] = 2.0 * lam;
            diag[n - 1] = 1.0 + 2.0 * lam;
            // sign convention: system (I - lam A) u_new = (I + lam A) u_old + b
            let neg_lower: Vec<f64> = lower.iter().map(|v| -v).collect();
            let neg_upper: Vec<f64> = upper.iter().map(|v| -v).collect();
            let mut t = 0.0;
            for _ in 0..steps {
                let mut rhs = vec![0.0; n];
                for i in 0..n {
                    let ui = u[i + 1];
                    let left = u[i]; // u[0] = 0 handles the Dirichlet edge
                    let right = if i + 2 < p.nx { u[i + 2] } else { 0.0 };
                    rhs[i] = if i < n - 1 {
                        ui + lam * (left - 2.0 * ui + right)
                    } else {
                        ui + lam * (2.0 * left - 2.0 * ui)
                    };
                }
                rhs[n - 1] += lam * 2.0 * h * (flux(t) + flux(t + dt));
                let sol = thomas(&neg_lower, &diag, &neg_upper, &rhs);
                u[1..].copy_from_slice(&sol);
                t += dt;
            }
        }
        BoundaryReading::TimeDerivative => {
            // unknowns u_1..u_{N-1}; u_N is prescribed
            let n = big_n - 1;
            let neg_lower = vec![-lam; n];
            let diag = vec![1.0 + 2.0 * lam; n];
            let neg_upper = vec![-lam; n];
            let mut t = 0.0;
            for _ in 0..steps {
                u[big_n] = dirichlet(t);
                let un_next = dirichlet(t + dt);
                let mut rhs = vec![0.0; n];
                for i in 0..n {
                    let ui = u[i + 1];
                    let left = u[i];
                    let right = u[i + 2];
                    rhs[i] = ui + lam * (left - 2.0 * ui + right);
                }
                rhs[n - 1] += lam * un_next;
                let sol = thomas(&neg_lower, &diag, &neg_upper, &rhs);
                u[1..big_n].copy_from_slice(&sol);
                u[big_n] = un_next;
                t += dt;
            }
        }
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::BlowUp(p.t_eval, p.omega));
    }
    Ok(u.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

// ------------------------------------------------------------------- burgers

/// Steady viscous Burgers u u_x = nu u_xx on [-1,1], u(-1)=alpha, u(1)=beta.
#[derive(Debug, Clone, Copy)]
pub struct BurgersParams {
    pub alpha: f64,
    pub beta: f64,
    pub nu: f64,
    pub nx: usize,
}

impl BurgersParams {
    pub fn swept(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta, nu: 0.1, nx: 1001 }
    }
}

#[derive(Debug, Clone)]
pub struct BurgersSolution {
    pub u: Vec<f64>,
    /// Sign-change location by linear interpolation, first from the left.
    pub qoi: f64,
    pub monotone_decreasing: bool,
    pub multiple_sign_changes: bool,
}

/// Damped Newton on the central-difference discretization; initial guess is
/// the linear interpolation of the boundary values.
pub fn burgers_solve(p: &BurgersParams) -> Result<BurgersSolution> {
    if !(p.nu > 0.0) {
        return Err(Error::InvalidArgument("burgers needs nu > 0".into()));
    }
    if p.nx < 3 {
        return Err(Error::InvalidArgument("burgers grid needs nx >= 3".into()));
    }
    let n = p.nx;
    let h = 2.0 / (n - 1) as f64;
    let mut u: Vec<f64> = (0..n)
        .map(|i| p.alpha + (p.beta - p.alpha) * i as f64 / (n - 1) as f64)
        .collect();
    u[0] = p.alpha;
    u[n - 1] = p.beta;

    let residual = |u: &[f64], out: &mut Vec<f64>| {
        out.clear();
        for i in 1..n - 1 {
            let conv = u[i] * (u[i + 1] - u[i - 1]) / (2.0 * h);
            let diff = p.nu * (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (h * h);
            out.push(conv - diff);
        }
    };
    let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();

    let mut f = Vec::with_capacity(n - 2);
    residual(&u, &mut f);
    let mut fnorm = norm2(&f);
    // residual entries are O(nu/h^2 * u), so the attainable floor scales with it
    let tol = 1e-13 * ((n - 2) as f64).sqrt() * (p.nu / (h * h))
        * (1.0 + p.alpha.abs().max(p.beta.abs()));
    let mut converged = false;
    for _ in 0..100 {
        if fnorm <= tol {
            converged = true;
            break;
        }
        // tridiagonal Jacobian of the interior residual
        let k = n - 2;
        let mut lower = vec![0.0; k];
        let mut diag = vec![0.0; k];
        let mut upper = vec![0.0; k];
        for (row, i) in (1..n - 1).enumerate() {
            lower[row] = -u[i] / (2.0 * h) - p.nu / (h * h);
            diag[row] = (u[i + 1] - u[i - 1]) / (2.0 * h) + 2.0 * p.nu / (h * h);
            upper[row] = u[i] / (2.0 * h) - p.nu / (h * h);
        }
        let neg_f: Vec<f64> = f.iter().map(|v| -v).collect();
        let delta = thomas(&lower, &diag, &upper, &neg_f);
        // backtracking on the residual norm
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = u.clone();
            for (row, i) in (1..n - 1).enumerate() {
                trial[i] += step * delta[row];
            }
            let mut ft = Vec::with_capacity(k);
            residual(&trial, &mut ft);
            let fnt = norm2(&ft);
            if fnt.is_finite() && fnt < (1.0 - 1e-4 * step) * fnorm {
                u = trial;
                f = ft;
                fnorm = fnt;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if !converged && fnorm > tol {
        return Err(Error::NoConvergence(format!(
            "burgers newton stalled at ||F|| = {fnorm} for alpha={}, beta={}",
            p.alpha, p.beta
        )));
    }

    let mut qoi = None;
    let mut changes = 0;
    for i in 0..n - 1 {
        if u[i] > 0.0 && u[i + 1] <= 0.0 || u[i] < 0.0 && u[i + 1] >= 0.0 {
            changes += 1;
            if qoi.is_none() {
                let x_i = -1.0 + i as f64 * h;
                qoi = Some(x_i + h * u[i] / (u[i] - u[i + 1]));
            }
        }
    }
    let qoi = qoi.ok_or_else(|| {
        Error::NoConvergence(format!(
            "burgers solution has no sign change for alpha={}, beta={}",
            p.alpha, p.beta
        ))
    })?;
    let monotone = u.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    Ok(BurgersSolution {
        u,
        qoi,
        monotone_decreasing: monotone,
        multiple_sign_changes: changes > 1,
    })
}

/// Location where the steady solution changes sign.
pub fn burgers_qoi(p: &BurgersParams) -> Result<f64> {
    let sol = burgers_solve(p)?;
    if sol.multiple_sign_changes {
        eprintln!(
            "warning: multiple sign changes for alpha={}, beta={}; using the first from the left",
            p.alpha, p.beta
        );
    }
    Ok(sol.qoi)
}

// --------------------------------------------------------------- QoI dataset

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QoiProblem {
    Oscillator,
    Heat,
    Burgers,
}

impl QoiProblem {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "oscillator" => Ok(Self::Oscillator),
            "heat" => Ok(Self::Heat),
            "burgers" => Ok(Self::Burgers),
            _ => Err(Error::Parse(format!("unknown problem `{s}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Oscillator => "oscillator",
            Self::Heat => "heat",
            Self::Burgers => "burgers",
        }
    }

    /// Swept parameter rectangle.
    pub fn rect(&self) -> ParamRect {
        match self {
            Self::Oscillator => ParamRect::new((1.0, 0.0), (3.0, 2.0)).unwrap(),
            Self::Heat => ParamRect::new((0.0, 0.0), (3.0, 5.0)).unwrap(),
            Self::Burgers => ParamRect::new((0.8, -1.2), (1.2, -0.8)).unwrap(),
        }
    }

    pub fn default_degree(&self) -> usize {
        match self {
            Self::Oscillator => 9,
            Self::Heat => 11,
            Self::Burgers => 7,
        }
    }

    pub fn resolution_tag(&self) -> &'static str {
        match self {
            Self::Oscillator => "rk4_dt1e-3_c1",
            Self::Heat => "cn_nx201_dt1e-3",
            Self::Burgers => "newton_nx1001",
        }
    }

    pub fn solve(&self, p1: f64, p2: f64) -> Result<f64> {
        match self {
            Self::Oscillator => oscillator_qoi(&OscillatorParams::swept(p1, p2)),
            Self::Heat => heat_qoi(&HeatParams::swept(p1, p2)),
            Self::Burgers => burgers_qoi(&BurgersParams::swept(p1, p2)),
        }
    }
}

/// On-disk QoI cache: one append-only CSV per problem with columns
/// `param1,param2,qoi,resolution_tag`, re-read at startup.
pub struct QoiCache {
    dir: PathBuf,
    entries: HashMap<(QoiProblem, u64, u64, String), f64>,
}

impl QoiCache {
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut entries = HashMap::new();
        for problem in [QoiProblem::Oscillator, QoiProblem::Heat, QoiProblem::Burgers] {
            let path = dir.join(format!("{}.csv", problem.name()));
            if !path.exists() {
                continue;
            }
            let text = fs::read_to_string(&path)?;
            for line in text.lines().skip(1) {
                let parts: Vec<&str> = line.split(',').collect();
                if parts.len() != 4 {
                    continue;
                }
                let p1: f64 = parts[0].parse().map_err(|_| Error::Parse(line.into()))?;
                let p2: f64 = parts[1].parse().map_err(|_| Error::Parse(line.into()))?;
                let q: f64 = parts[2].parse().map_err(|_| Error::Parse(line.into()))?;
                entries.insert((problem, p1.to_bits(), p2.to_bits(), parts[3].to_string()), q);
            }
        }
        Ok(Self { dir: dir.to_path_buf(), entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn get(&self, problem: QoiProblem, p1: f64, p2: f64, tag: &str) -> Option<f64> {
        self.entries.get(&(problem, p1.to_bits(), p2.to_bits(), tag.to_string())).copied()
    }

    fn insert(&mut self, problem: QoiProblem, p1: f64, p2: f64, tag: &str, qoi: f64) -> Result<()> {
        let path = self.dir.join(format!("{}.csv", problem.name()));
        let new_file = !path.exists();
        let mut file = fs::OpenOptions::new().create(true).append(true).open(&path)?;
        if new_file {
            writeln!(file, "param1,param2,qoi,resolution_tag")?;
        }
        writeln!(file, "{:.16e},{:.16e},{:.16e},{}", p1, p2, qoi, tag)?;
        self.entries.insert((problem, p1.to_bits(), p2.to_bits(), tag.to_string()), qoi);
        Ok(())
    }
}

/// Build the (X, y) dataset for a test problem on a uniform tensor grid.
/// For Burgers, y is shifted by -min(y) and the shift is returned.
pub fn build_qoi_dataset(
    problem: QoiProblem,
    degree: usize,
    grid: (usize, usize),
    cache: Option<&mut QoiCache>,
) -> Result<(DesignMatrix, DVector<f64>, f64)> {
    let rect = problem.rect();
    let points = tensor_grid(&rect, grid.0, grid.1);
    let spec = FeatureSpec { degree, rect };
    let x = legendre_vandermonde(&points, &spec)?;
    let tag = problem.resolution_tag();
    let mut y = Vec::with_capacity(points.len());
    let mut cache = cache;
    for &(p1, p2) in &points {
        let cached = cache.as_ref().and_then(|c| c.get(problem, p1, p2, tag));
        let q = match cached {
            Some(q) => q,
            None => {
                let q = problem.solve(p1, p2).map_err(|e| {
                    Error::InvalidArgument(format!(
                        "solver failed at ({p1}, {p2}): {e}"
                    ))
                })?;
                if let Some(c) = cache.as_mut() {
                    c.insert(problem, p1, p2, tag, q)?;
                }
                q
            }
        };
        y.push(q);
    }
    let mut shift = 0.0;
    if problem == QoiProblem::Burgers {
        let min = y.iter().cloned().fold(f64::INFINITY, f64::min);
        for v in &mut y {
            *v -= min;
        }
        shift = min;
    }
    Ok((x, DVector::from_vec(y), shift))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oscillator_at_rest_stays_at_rest() {
        let p = OscillatorParams {
            c: 1.0,
            k: 2.0,
            f: 0.0,
            omega: 1.0,
            x0: 0.0,
            x1: 0.0,
            t_end: 20.0,
            dt: 1e-3,
        };
        assert_eq!(oscillator_qoi(&p).unwrap(), 0.0);
    }

    /// Closed form for x'' + c x' + k x = f cos(w t), x(0) = x'(0) = 0,
    /// underdamped case.
    fn oscillator_closed_form_max(c: f64, k: f64, f: f64, w: f64, t_end: f64) -> f64 {
        let denom = (k - w * w).powi(2) + (c * w).powi(2);
        let a = f * (k - w * w) / denom;
        let b = f * c * w / denom;
        // particular: a cos(wt) + b sin(wt); homogeneous fixes x(0)=x'(0)=0
        let sigma = -c / 2.0;
        let wd = (k - c * c / 4.0).sqrt();
        let c1 = -a;
        let c2 = (-b * w - sigma * c1) / wd;
        let x = |t: f64| {
            a * (w * t).cos()
                + b * (w * t).sin()
                + (sigma * t).exp() * (c1 * (wd * t).cos() + c2 * (wd * t).sin())
        };
        let steps = 2_000_000;
        (0..=steps)
            .map(|i| x(t_end * i as f64 / steps as f64).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn oscillator_matches_closed_form() {
        let p = OscillatorParams {
            c: 1.0,
            k: 2.0,
            f: 1.0,
            omega: 1.0,
            x0: 0.0,
            x1: 0.0,
            t_end: 20.0,
            dt: 1e-4,
        };
        let qoi = oscillator_qoi(&p).unwrap();
        let exact = oscillator_closed_form_max(1.0, 2.0, 1.0, 1.0, 20.0);
        assert!(
            (qoi - exact).abs() <= 1e-6 * exact,
            "rk4 {qoi} vs closed form {exact}"
        );
    }

    #[test]
    fn oscillator_refinement_stable() {
        let coarse = oscillator_qoi(&OscillatorParams::swept(2.0, 1.3)).unwrap();
        let mut p = OscillatorParams::swept(2.0, 1.3);
        p.dt = 5e-4;
        let fine = oscillator_qoi(&p).unwrap();
        // The max is taken over the time grid, so halving dt moves the sampled
        // peak by O(dt^2 * |x''|) ~ 1e-7 even though RK4 itself is O(dt^4).
        assert!((coarse - fine).abs() <= 1e-6 * fine.abs());
    }

    #[test]
    fn heat_initial_condition_is_exact() {
        let p = HeatParams::swept(0.0, 1.0);
        assert!((heat_qoi(&p).unwrap() - 1.0).abs() <= 1e-12);
        let p = HeatParams::swept(0.0, 2.0);
        assert!((heat_qoi(&p).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn heat_refinement_stable() {
        let coarse = heat_qoi(&HeatParams { omega: 2.5, t_eval: 1.0, nx: 101, dt: 1e-3, boundary: BoundaryReading::Flux }).unwrap();
        let fine = heat_qoi(&HeatParams { omega: 2.5, t_eval: 1.0, nx: 201, dt: 2.5e-4, boundary: BoundaryReading::Flux }).unwrap();
        assert!(
            (coarse - fine).abs() <= 1e-4 * fine.abs().max(1.0),
            "coarse {coarse} vs fine {fine}"
        );
    }

    #[test]
    fn heat_time_derivative_reading_runs() {
        let p = HeatParams { omega: 1.0, t_eval: 0.5, nx: 101, dt: 1e-3, boundary: BoundaryReading::TimeDerivative };
        let q = heat_qoi(&p).unwrap();
        assert!(q.is_finite());
    }

    #[test]
    fn burgers_antisymmetric_boundary_has_root_at_zero() {
        let q = burgers_qoi(&BurgersParams::swept(1.0, -1.0)).unwrap();
        assert!(q.abs() <= 1e-10, "root at {q}");
    }

    #[test]
    fn burgers_asymmetric_boundary_shifts_root_right() {
        let q = burgers_qoi(&BurgersParams { alpha: 1.2, beta: -0.8, nu: 0.1, nx: 2001 }).unwrap();
        assert!(q > 0.0, "root at {q}");
    }

    #[test]
    fn burgers_refinement_stable() {
        let a = burgers_qoi(&BurgersParams { alpha: 1.1, beta: -0.9, nu: 0.1, nx: 1001 }).unwrap();
        let b = burgers_qoi(&BurgersParams { alpha: 1.1, beta: -0.9, nu: 0.1, nx: 2001 }).unwrap();
        assert!((a - b).abs() <= 1e-5, "{a} vs {b}");
    }

    #[test]
    fn burgers_solution_monotone_in_studied_range() {
        for &(a, b) in &[(0.8, -1.2), (1.0, -1.0), (1.2, -0.8)] {
            let sol = burgers_solve(&BurgersParams::swept(a, b)).unwrap();
            assert!(sol.monotone_decreasing, "alpha={a}, beta={b}");
            assert!(!sol.multiple_sign_changes);
        }
    }

    #[test]
    fn solvers_are_deterministic() {
        let a = oscillator_qoi(&OscillatorParams::swept(1.7, 0.9)).unwrap();
        let b = oscillator_qoi(&OscillatorParams::swept(1.7, 0.9)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        let a = heat_qoi(&HeatParams { nx: 51, ..HeatParams::swept(1.0, 2.0) }).unwrap();
        let b = heat_qoi(&HeatParams { nx: 51, ..HeatParams::swept(1.0, 2.0) }).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        let a = burgers_qoi(&BurgersParams { nx: 201, ..BurgersParams::swept(0.9, -1.1) }).unwrap();
        let b = burgers_qoi(&BurgersParams { nx: 201, ..BurgersParams::swept(0.9, -1.1) }).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn dataset_shapes_and_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut cache = QoiCache::open(dir.path()).unwrap();
        let (x, y, shift) =
            build_qoi_dataset(QoiProblem::Burgers, 3, (4, 4), Some(&mut cache)).unwrap();
        assert_eq!(x.nrows(), 16);
        assert_eq!(x.ncols(), 10);
        assert!(y.min() >= 0.0);
        assert!(shift <= 0.0 || shift >= 0.0);
        assert_eq!(cache.len(), 16);
        // reopening reads everything back; no new solves needed
        let mut cache2 = QoiCache::open(dir.path()).unwrap();
        assert_eq!(cache2.len(), 16);
        let (_, y2, _) =
            build_qoi_dataset(QoiProblem::Burgers, 3, (4, 4), Some(&mut cache2)).unwrap();
        assert_eq!(y, y2);
        assert_eq!(cache2.len(), 16);
    }
}
