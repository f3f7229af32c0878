//! Nonlinear least-squares fitting of saturating power laws.
//!
//! The one-variable law is `y = (scale / x)^exponent + floor`, fitted
//! internally as `A·x^(-exponent) + floor` with `A = scale^exponent`. The
//! joint law is `y = ((γ/P)^(α/β) + η/D)^β + δ`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointPoint {
    pub p: f64,
    pub d: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iters: usize,
    /// Stop once an accepted step improves SSE by less than this fraction.
    pub tol: f64,
    pub damping: f64,
    pub restarts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            tol: 1e-12,
            damping: 1e-3,
            restarts: 8,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.restarts == 0 {
            return Err(Error::Config("max_iters and restarts must be positive".into()));
        }
        if !(self.tol > 0.0) || !(self.damping > 0.0) {
            return Err(Error::Config("tol and damping must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub amplitude: f64,
    pub exponent: f64,
    pub floor: f64,
    /// `amplitude^(1/exponent)`: γ, η or μ depending on the law.
    pub scale: f64,
    pub r2: f64,
    pub residuals: Vec<f64>,
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// SSE after each accepted step of the winning start.
    pub sse_history: Vec<f64>,
}

impl FitResult {
    pub fn predict(&self, x: f64) -> Result<f64> {
        check_domain(x)?;
        Ok((self.amplitude.ln() - self.exponent * x.ln()).exp() + self.floor)
    }

    pub fn report(&self, law: &str) -> FitReport {
        FitReport {
            law: law.to_string(),
            params: serde_json::json!({
                "scale": self.scale,
                "exponent": self.exponent,
                "floor": self.floor,
                "amplitude": self.amplitude,
            }),
            r2: self.r2,
            converged: self.converged,
            n_points: self.residuals.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointFitResult {
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub delta: f64,
    pub r2: f64,
    pub residuals: Vec<f64>,
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl JointFitResult {
    pub fn predict(&self, p: f64, d: f64) -> Result<f64> {
        check_domain(p)?;
        check_domain(d)?;
        Ok(joint_law(
            [self.gamma.ln(), self.alpha.ln(), self.beta.ln(), self.eta.ln()],
            self.delta,
            p,
            d,
        ))
    }

    pub fn report(&self) -> FitReport {
        FitReport {
            law: "joint".into(),
            params: serde_json::json!({
                "gamma": self.gamma,
                "alpha": self.alpha,
                "beta": self.beta,
                "eta": self.eta,
                "delta": self.delta,
            }),
            r2: self.r2,
            converged: self.converged,
            n_points: self.residuals.len(),
        }
    }
}

/// Serialized form of a fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub law: String,
    pub params: serde_json::Value,
    pub r2: f64,
    pub converged: bool,
    pub n_points: usize,
}

fn check_domain(x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{x} is not a positive finite value")))
    }
}

/// `(scale / x)^exponent + floor`.
pub fn power_law(scale: f64, exponent: f64, floor: f64, x: f64) -> f64 {
    (exponent * (scale.ln() - x.ln())).exp() + floor
}

/// `((γ/P)^(α/β) + η/D)^β + δ` from log-space `[lnγ, lnα, lnβ, lnη]`.
fn joint_law(ln: [f64; 4], delta: f64, p: f64, d: f64) -> f64 {
    let (alpha, beta) = (ln[1].exp(), ln[2].exp());
    let a = (alpha / beta * (ln[0] - p.ln())).exp();
    let b = (ln[3] - d.ln()).exp();
    (beta * (a + b).ln()).exp() + delta
}

pub fn r_squared(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    if observed.len() != predicted.len() || observed.len() < 2 {
        return Err(Error::Input(
            "r_squared needs two equal-length series of at least 2 values".into(),
        ));
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let ss_tot: f64 = observed.iter().map(|o| (o - mean) * (o - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedMetric("observed values have zero variance".into()));
    }
    let ss_res: f64 = observed
        .iter()
        .zip(predicted)
        .map(|(o, p)| (o - p) * (o - p))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

fn softplus(w: f64) -> f64 {
    if w > 30.0 {
        w + (-w).exp().ln_1p()
    } else {
        w.exp().ln_1p()
    }
}

fn softplus_inv(v: f64) -> f64 {
    if v <= 0.0 {
        -40.0
    } else if v > 30.0 {
        v + (-(-v).exp_m1()).ln()
    } else {
        v.exp_m1().ln()
    }
}

fn sigmoid(w: f64) -> f64 {
    1.0 / (1.0 + (-w).exp())
}

struct LmOutcome {
    theta: Vec<f64>,
    sse: f64,
    iterations: usize,
    converged: bool,
    history: Vec<f64>,
}

/// Levenberg–Marquardt on residuals `r = y - f(θ)`.
///
/// `eval` fills the residuals and the Jacobian of `f` (row per residual) and
/// returns `false` when `θ` yields non-finite values.
fn levenberg<F>(theta0: Vec<f64>, n: usize, fc: &FitConfig, mut eval: F) -> Option<LmOutcome>
where
    F: FnMut(&[f64], &mut [f64], Option<&mut [Vec<f64>]>) -> bool,
{
    let k = theta0.len();
    let mut theta = theta0;
    let mut r = vec![0.0; n];
    let mut jac = vec![vec![0.0; k]; n];
    if !eval(&theta, &mut r, Some(&mut jac)) {
        return None;
    }
    let mut sse: f64 = r.iter().map(|v| v * v).sum();
    let mut lambda = fc.damping;
    let mut history = vec![sse];
    let mut trial = vec![0.0; k];
    let mut r_trial = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < fc.max_iters {
        if sse == 0.0 {
            converged = true;
            break;
        }
        iterations += 1;
        let mut jtj = vec![vec![0.0; k]; k];
        let mut jtr = vec![0.0; k];
        for (row, ri) in jac.iter().zip(&r) {
            for a in 0..k {
                jtr[a] += row[a] * ri;
                for b in 0..=a {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                jtj[b][a] = jtj[a][b];
            }
        }
        let max_diag = (0..k).map(|a| jtj[a][a]).fold(0.0, f64::max);
        if max_diag == 0.0 {
            break;
        }
        let mut accepted = false;
        while lambda <= 1e16 {
            let mut m = jtj.clone();
            for (a, row) in m.iter_mut().enumerate() {
                row[a] += lambda * (jtj[a][a] + 1e-12 * max_diag);
            }
            if let Some(step) = solve(m, jtr.clone()) {
                for a in 0..k {
                    trial[a] = theta[a] + step[a];
                }
                if eval(&trial, &mut r_trial, None) {
                    let sse_trial: f64 = r_trial.iter().map(|v| v * v).sum();
                    if sse_trial < sse {
                        let improvement = (sse - sse_trial) / sse;
                        theta.copy_from_slice(&trial);
                        sse = sse_trial;
                        history.push(sse);
                        eval(&theta, &mut r, Some(&mut jac));
                        lambda = (lambda / 3.0).max(1e-15);
                        accepted = true;
                        if improvement < fc.tol {
                            converged = true;
                        }
                        break;
                    }
                }
            }
            lambda *= 2.0;
        }
        if !accepted {
            // No descent direction left at any damping: a stationary point.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    Some(LmOutcome {
        theta,
        sse,
        iterations,
        converged,
        history,
    })
}

/// Gaussian elimination with partial pivoting.
fn solve(mut m: Vec<Vec<f64>>, mut v: Vec<f64>) -> Option<Vec<f64>> {
    let k = v.len();
    for c in 0..k {
        let p = (c..k).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))?;
        if m[p][c] == 0.0 || !m[p][c].is_finite() {
            return None;
        }
        m.swap(c, p);
        v.swap(c, p);
        for row in c + 1..k {
            let f = m[row][c] / m[c][c];
            for col in c..k {
                m[row][col] -= f * m[c][col];
            }
            v[row] -= f * v[c];
        }
    }
    let mut x = vec![0.0; k];
    for c in (0..k).rev() {
        let s: f64 = (c + 1..k).map(|j| m[c][j] * x[j]).sum();
        x[c] = (v[c] - s) / m[c][c];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn validate_points(xs: &[f64], ys: &[f64], min: usize) -> Result<()> {
    if xs.len() < min {
        return Err(Error::Input(format!(
            "fit needs at least {min} points, got {}",
            xs.len()
        )));
    }
    if xs.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::Input("x values must be positive and finite".into()));
    }
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::Input("y values must be finite".into()));
    }
    if ys.iter().all(|&y| y == ys[0]) {
        return Err(Error::Degenerate("all y values are equal".into()));
    }
    Ok(())
}

/// Ordinary least squares slope and intercept.
fn linear_regression(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

const FLOOR_FRACTIONS: [f64; 8] = [0.9, 0.0, 0.5, 0.75, 0.95, 0.99, 0.999, 0.9999];

/// Least-squares amplitude and non-negative floor of `y ≈ A·exp(-s·u) + c`
/// for a fixed exponent `s`, as `(ln A, c, sse)`. `None` when `A ≤ 0`.
fn project(u: &[f64], y: &[f64], s: f64) -> Option<(f64, f64, f64)> {
    let z: Vec<f64> = u.iter().map(|u| (-s * u).exp()).collect();
    if z.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let (slope, intercept) = linear_regression(&z, y);
    let (a, c) = if intercept >= 0.0 {
        (slope, intercept)
    } else {
        let zz: f64 = z.iter().map(|v| v * v).sum();
        let zy: f64 = z.iter().zip(y).map(|(a, b)| a * b).sum();
        (zy / zz, 0.0)
    };
    if !(a > 0.0 && a.is_finite()) {
        return None;
    }
    let sse = z.iter().zip(y).map(|(z, y)| (y - a * z - c).powi(2)).sum();
    Some((a.ln(), c, sse))
}

/// Exponents minimizing the projected SSE: a log-spaced scan over
/// `[1e-4, 20]`, each of the best local minima refined by golden section.
fn projected_starts(u: &[f64], y: &[f64], count: usize) -> Vec<(f64, (f64, f64, f64))> {
    const STEPS: usize = 240;
    let (lo, hi) = (1e-4f64.ln(), 20f64.ln());
    let grid: Vec<f64> = (0..=STEPS).map(|i| lo + (hi - lo) * i as f64 / STEPS as f64).collect();
    let sse = |ls: f64| project(u, y, ls.exp()).map_or(f64::INFINITY, |p| p.2);
    let values: Vec<f64> = grid.iter().map(|&g| sse(g)).collect();
    let mut minima: Vec<usize> = (0..=STEPS)
        .filter(|&i| {
            values[i].is_finite()
                && (i == 0 || values[i] <= values[i - 1])
                && (i == STEPS || values[i] <= values[i + 1])
        })
        .collect();
    minima.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    minima
        .into_iter()
        .take(count)
        .filter_map(|i| {
            let (mut a, mut b) = (grid[i.saturating_sub(1)], grid[(i + 1).min(STEPS)]);
            let g = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..200 {
                let (c, d) = (b - g * (b - a), a + g * (b - a));
                if sse(c) <= sse(d) {
                    b = d;
                } else {
                    a = c;
                }
            }
            let ls = 0.5 * (a + b);
            project(u, y, ls.exp()).map(|p| (ls, p))
        })
        .collect()
}

/// Fits `y = (scale/x)^exponent + floor` by Levenberg–Marquardt.
///
/// Data are centred (`x` by its geometric mean, `y` by its mean magnitude)
/// so results are equivariant under rescaling of either axis. Starts place
/// the initial floor at fractions of `min(y)` and regress `ln(y - floor)`
/// on `ln x`, or take the exponents that minimize the SSE with amplitude and
/// floor solved linearly; the lowest SSE wins.
pub fn fit_power_law(points: &[ScalingPoint], fc: &FitConfig) -> Result<FitResult> {
    fc.validate()?;
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
    validate_points(&xs, &ys, 4)?;
    let mut sorted = xs.clone();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Input("x values must be distinct".into()));
    }

    let n = xs.len();
    let ln_x_ref = xs.iter().map(|x| x.ln()).sum::<f64>() / n as f64;
    let y_scale = ys.iter().map(|y| y.abs()).sum::<f64>() / n as f64;
    let u: Vec<f64> = xs.iter().map(|x| x.ln() - ln_x_ref).collect();
    let yn: Vec<f64> = ys.iter().map(|y| y / y_scale).collect();
    let y_min = yn.iter().copied().fold(f64::INFINITY, f64::min);

    // θ = (a, ln s, floor): f = exp(a - s·u) + floor. A negative floor is
    // infeasible, which makes the step count as a failure.
    let eval = |theta: &[f64], r: &mut [f64], jac: Option<&mut [Vec<f64>]>, fixed_floor: bool| {
        let (a, s) = (theta[0], theta[1].exp());
        let floor = if fixed_floor { 0.0 } else { theta[2] };
        if floor < 0.0 {
            return false;
        }
        let mut jac = jac;
        for i in 0..n {
            let t = (a - s * u[i]).exp();
            r[i] = yn[i] - (t + floor);
            if let Some(j) = jac.as_deref_mut() {
                j[i][0] = t;
                j[i][1] = -t * u[i] * s;
                if !fixed_floor {
                    j[i][2] = 1.0;
                }
            }
        }
        r.iter().all(|v| v.is_finite())
    };

    let init = |floor0: f64| -> Vec<f64> {
        let pts: Vec<(f64, f64)> = u
            .iter()
            .zip(&yn)
            .filter(|(_, &y)| y - floor0 > 0.0)
            .map(|(&u, &y)| (u, (y - floor0).ln()))
            .collect();
        let (slope, intercept) = if pts.len() >= 2 {
            let (a, b): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            linear_regression(&a, &b)
        } else {
            (-1.0, 0.0)
        };
        let s = (-slope).max(1e-3);
        vec![intercept, s.ln(), floor0]
    };

    let mut best: Option<(LmOutcome, bool)> = None;
    let consider = |out: LmOutcome, fixed: bool, best: &mut Option<(LmOutcome, bool)>| {
        if best.as_ref().is_none_or(|(b, _)| out.sse < b.sse) {
            *best = Some((out, fixed));
        }
    };
    for &frac in FLOOR_FRACTIONS.iter().cycle().take(fc.restarts) {
        let theta0 = init(frac * y_min.max(0.0));
        if let Some(out) = levenberg(theta0, n, fc, |t, r, j| eval(t, r, j, false)) {
            consider(out, false, &mut best);
        }
    }
    for (ls, (ln_a, floor0, _)) in projected_starts(&u, &yn, 3) {
        if floor0 > 0.0 {
            if let Some(out) = levenberg(vec![ln_a, ls, floor0], n, fc, |t, r, j| eval(t, r, j, false)) {
                consider(out, false, &mut best);
            }
        } else if let Some(mut out) = levenberg(vec![ln_a, ls], n, fc, |t, r, j| eval(t, r, j, true)) {
            out.theta.push(0.0);
            consider(out, true, &mut best);
        }
    }
    // Steps that cross zero are rejected, so a zero floor is only approached;
    // polish that boundary with the floor pinned at exactly zero.
    let near_zero = best
        .as_ref()
        .is_none_or(|(b, _)| b.theta[2] < 1e-6 * y_min.abs().max(1e-300));
    if near_zero {
        let mut theta0 = init(0.0);
        theta0.truncate(2);
        if let Some(mut out) = levenberg(theta0, n, fc, |t, r, j| eval(t, r, j, true)) {
            out.theta.push(0.0);
            consider(out, true, &mut best);
        }
    }
    let (out, fixed) = best.ok_or_else(|| Error::Degenerate("no start produced a finite fit".into()))?;

    let s = out.theta[1].exp();
    let floor = if fixed { 0.0 } else { out.theta[2] * y_scale };
    let ln_amp = out.theta[0] + s * ln_x_ref + y_scale.ln();
    let scale = (ln_amp / s).exp();
    let predicted: Vec<f64> = xs.iter().map(|&x| (ln_amp - s * x.ln()).exp() + floor).collect();
    let residuals: Vec<f64> = ys.iter().zip(&predicted).map(|(y, p)| y - p).collect();
    let sse = residuals.iter().map(|r| r * r).sum();
    Ok(FitResult {
        amplitude: ln_amp.exp(),
        exponent: s,
        floor,
        scale,
        r2: r_squared(&ys, &predicted)?,
        residuals,
        sse,
        iterations: out.iterations,
        converged: out.converged,
        sse_history: out.history.iter().map(|v| v * y_scale * y_scale).collect(),
    })
}

fn distinct(values: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

fn marginal(points: &[JointPoint], fixed_d: bool, fc: &FitConfig) -> Option<FitResult> {
    let key = |p: &JointPoint| if fixed_d { p.d } else { p.p };
    let top = points.iter().map(key).fold(f64::NEG_INFINITY, f64::max);
    let slice: Vec<ScalingPoint> = points
        .iter()
        .filter(|p| key(p) == top)
        .map(|p| ScalingPoint {
            x: if fixed_d { p.p } else { p.d },
            y: p.y,
        })
        .collect();
    fit_power_law(&slice, fc).ok()
}

/// Fits `y = ((γ/P)^(α/β) + η/D)^β + δ` by Levenberg–Marquardt over
/// `(ln γ, ln α, ln β, ln η)` and a softplus-mapped `δ`.
///
/// Starts come from marginal fits along `P` at the largest `D` and along `D`
/// at the largest `P`, plus starts that suppress one term. `converged`
/// additionally requires at least three distinct values of each variable.
pub fn fit_joint(points: &[JointPoint], fc: &FitConfig) -> Result<JointFitResult> {
    fc.validate()?;
    let ps: Vec<f64> = points.iter().map(|p| p.p).collect();
    let ds: Vec<f64> = points.iter().map(|p| p.d).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
    validate_points(&ps, &ys, 9)?;
    validate_points(&ds, &ys, 9)?;
    let n = points.len();
    let y_scale = ys.iter().map(|y| y.abs()).sum::<f64>() / n as f64;
    let y_min = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let ln_p: Vec<f64> = ps.iter().map(|p| p.ln()).collect();
    let ln_d: Vec<f64> = ds.iter().map(|d| d.ln()).collect();

    let eval = |theta: &[f64], r: &mut [f64], jac: Option<&mut [Vec<f64>]>| {
        let (alpha, beta) = (theta[1].exp(), theta[2].exp());
        let delta = softplus(theta[4]);
        let mut jac = jac;
        for i in 0..n {
            let ln_a = alpha / beta * (theta[0] - ln_p[i]);
            let a = ln_a.exp();
            let b = (theta[3] - ln_d[i]).exp();
            let s = a + b;
            let ln_s = s.ln();
            let g = (beta * ln_s).exp();
            r[i] = (ys[i] - (g + delta)) / y_scale;
            if let Some(j) = jac.as_deref_mut() {
                let a_ln_a = if a == 0.0 { 0.0 } else { a * ln_a };
                let row = &mut j[i];
                row[0] = g * alpha * a / s / y_scale;
                row[1] = g * beta * a_ln_a / s / y_scale;
                row[2] = g * beta * (ln_s - a_ln_a / s) / y_scale;
                row[3] = g * beta * b / s / y_scale;
                row[4] = sigmoid(theta[4]) / y_scale;
            }
        }
        r.iter().all(|v| v.is_finite())
    };

    let mp = marginal(points, true, fc);
    let md = marginal(points, false, fc);
    let geo = |v: &[f64]| (v.iter().map(|x| x.ln()).sum::<f64>() / v.len() as f64).exp();
    let p_min = ps.iter().copied().fold(f64::INFINITY, f64::min);
    let d_min = ds.iter().copied().fold(f64::INFINITY, f64::min);
    let usable = |f: &&FitResult| f.scale > 0.0 && f.scale.is_finite();
    let alpha0 = mp.as_ref().filter(usable).map_or(1.0, |f| f.exponent.clamp(0.05, 20.0));
    let gamma0 = mp.as_ref().filter(usable).map_or(geo(&ps), |f| f.scale);
    let beta0 = md.as_ref().filter(usable).map_or(1.0, |f| f.exponent.clamp(0.05, 20.0));
    let eta0 = md.as_ref().filter(usable).map_or(geo(&ds), |f| f.scale);
    let delta0 = match (&mp, &md) {
        (Some(a), Some(b)) => a.floor.min(b.floor),
        (Some(f), None) | (None, Some(f)) => f.floor,
        (None, None) => 0.5 * y_min.max(0.0),
    }
    .min(0.99 * y_min.max(0.0));
    let start = |gamma: f64, alpha: f64, beta: f64, eta: f64, delta: f64| {
        vec![
            gamma.ln(),
            alpha.max(1e-3).ln(),
            beta.max(1e-3).ln(),
            eta.ln(),
            softplus_inv(delta),
        ]
    };
    let starts = [
        start(gamma0, alpha0, beta0, eta0, delta0),
        // One term suppressed to at most 1e-3 on the grid.
        start(1e-3 * p_min, beta0, beta0, eta0, md.as_ref().map_or(delta0, |f| f.floor)),
        start(gamma0, alpha0, 1.0, 1e-3 * d_min, mp.as_ref().map_or(delta0, |f| f.floor)),
        start(geo(&ps), 1.0, 1.0, geo(&ds), 0.5 * y_min.max(0.0)),
    ];

    let mut best: Option<LmOutcome> = None;
    for theta0 in starts {
        if theta0.iter().any(|v| !v.is_finite()) {
            continue;
        }
        if let Some(out) = levenberg(theta0, n, fc, eval) {
            if best.as_ref().is_none_or(|b| out.sse < b.sse) {
                best = Some(out);
            }
        }
    }
    let out = best.ok_or_else(|| Error::Degenerate("no start produced a finite fit".into()))?;
    let t = &out.theta;
    let mut fit = JointFitResult {
        gamma: t[0].exp(),
        alpha: t[1].exp(),
        beta: t[2].exp(),
        eta: t[3].exp(),
        delta: softplus(t[4]),
        r2: 0.0,
        residuals: Vec::new(),
        sse: 0.0,
        iterations: out.iterations,
        converged: out.converged && distinct(ps.iter().copied()) >= 3 && distinct(ds.iter().copied()) >= 3,
    };
    let predicted: Vec<f64> = points
        .iter()
        .map(|p| joint_law([t[0], t[1], t[2], t[3]], fit.delta, p.p, p.d))
        .collect();
    fit.residuals = ys.iter().zip(&predicted).map(|(y, p)| y - p).collect();
    fit.sse = fit.residuals.iter().map(|r| r * r).sum();
    fit.r2 = r_squared(&ys, &predicted)?;
    Ok(fit)
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Input(format!("{}: {other:?}", path.display())),
        })?;
    let mut out = Vec::new();
    for (i, row) in reader.deserialize().enumerate() {
        out.push(row.map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 2,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Reads a CSV with header `x,y`.
pub fn read_points(path: &Path) -> Result<Vec<ScalingPoint>> {
    read_csv(path)
}

/// Reads a CSV with header `p,d,y`.
pub fn read_joint_points(path: &Path) -> Result<Vec<JointPoint>> {
    read_csv(path)
}

pub fn write_report(path: &Path, report: &FitReport) -> Result<()> {
    util::write_atomic(path, serde_json::to_string_pretty(report)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(xs: &[f64], f: impl Fn(f64) -> f64) -> Vec<ScalingPoint> {
        xs.iter().map(|&x| ScalingPoint { x, y: f(x) }).collect()
    }

    const T5_P: [f64; 5] = [6e7, 2e8, 7e8, 2.8e9, 1.1e10];

    #[test]
    fn exact_hyperbola() {
        let fit = fit_power_law(&pts(&[1.0, 2.0, 4.0, 8.0], |x| 1.0 / x), &FitConfig::default()).unwrap();
        assert!((fit.amplitude - 1.0).abs() < 1e-9, "{fit:?}");
        assert!((fit.exponent - 1.0).abs() < 1e-9);
        assert!(fit.floor.abs() < 1e-9);
        assert!((fit.scale - 1.0).abs() < 1e-9);
        assert!((fit.r2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn recovers_t5_model_size_law() {
        let fit = fit_power_law(
            &pts(&T5_P, |x| power_law(2.26e-2, 0.40, 0.00356, x)),
            &FitConfig::default(),
        )
        .unwrap();
        assert!((fit.exponent / 0.40 - 1.0).abs() < 0.01, "{fit:?}");
        assert!((fit.floor / 0.00356 - 1.0).abs() < 0.05);
        assert!(fit.r2 >= 0.9999);
        for (x, r) in T5_P.iter().zip(&fit.residuals) {
            let manual = (fit.scale / x).powf(fit.exponent) + fit.floor;
            assert!((manual - fit.predict(*x).unwrap()).abs() <= 1e-9);
            assert!(r.is_finite());
        }
    }

    #[test]
    fn scale_equivariance() {
        let base = pts(&T5_P, |x| power_law(1.24e8, 2.40, 0.00328, x));
        let c = 37.5;
        let scaled: Vec<ScalingPoint> = base.iter().map(|p| ScalingPoint { x: p.x * c, y: p.y }).collect();
        let fc = FitConfig::default();
        let a = fit_power_law(&base, &fc).unwrap();
        let b = fit_power_law(&scaled, &fc).unwrap();
        let rel = |u: f64, v: f64| ((u - v) / v).abs();
        assert!(rel(b.scale, a.scale * c) < 1e-6);
        assert!(rel(b.exponent, a.exponent) < 1e-6);
        assert!(rel(b.floor, a.floor) < 1e-6);
        assert!(rel(b.r2, a.r2) < 1e-6);
    }

    #[test]
    fn sse_history_non_increasing() {
        let data = pts(&[1.0, 3.0, 9.0, 27.0, 81.0], |x| 2.0 * x.powf(-0.7) + 0.1 + 0.01 * (x.ln()).sin());
        let fit = fit_power_law(&data, &FitConfig::default()).unwrap();
        assert!(fit.sse_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn power_law_errors() {
        let fc = FitConfig::default();
        assert!(matches!(
            fit_power_law(&pts(&[1.0, 2.0, 3.0], |x| x), &fc).unwrap_err(),
            Error::Input(_)
        ));
        assert!(matches!(
            fit_power_law(&pts(&[1.0, 2.0, 3.0, 4.0], |_| 1.0), &fc).unwrap_err(),
            Error::Degenerate(_)
        ));
        assert!(fit_power_law(&pts(&[1.0, 1.0, 3.0, 4.0], |x| 1.0 / x), &fc).is_err());
    }

    #[test]
    fn r_squared_values() {
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap(), 0.5);
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[2.0; 3]).unwrap(), 0.0);
        assert!(r_squared(&[1.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn predict_values() {
        let t5 = 2.26e-2f64;
        let y = power_law(t5, 0.40, 0.00356, 1e8);
        assert!((y - 3.699e-3).abs() < 5e-7, "{y}");
        assert!((power_law(2.71e9, 0.3479, 0.2779, 2.71e9) - 1.2779).abs() < 1e-12);
        let far = power_law(t5, 0.40, 0.00356, 1e15);
        let farther = power_law(t5, 0.40, 0.00356, 1e18);
        assert!(far > farther && farther > 0.00356);
        let fit = fit_power_law(&pts(&[1.0, 2.0, 4.0, 8.0], |x| 1.0 / x), &FitConfig::default()).unwrap();
        assert!(matches!(fit.predict(0.0).unwrap_err(), Error::Domain(_)));
    }

    fn reference_grid() -> Vec<JointPoint> {
        let logspace = |lo: f64, hi: f64, i: usize| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / 4.0).exp();
        let ln = [6.32e3f64.ln(), 3.27f64.ln(), 0.95f64.ln(), 3.37e5f64.ln()];
        let mut out = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                let (p, d) = (logspace(1e8, 7e10, i), logspace(1e4, 6e5, j));
                out.push(JointPoint { p, d, y: joint_law(ln, 3.26e-3, p, d) });
            }
        }
        out
    }

    #[test]
    fn joint_curve_recovery() {
        let grid = reference_grid();
        let fit = fit_joint(&grid, &FitConfig::default()).unwrap();
        let rmse = (grid
            .iter()
            .map(|g| ((fit.predict(g.p, g.d).unwrap() - g.y) / g.y).powi(2))
            .sum::<f64>()
            / grid.len() as f64)
            .sqrt();
        assert!(rmse <= 1e-6, "{rmse} {fit:?}");
        assert!(fit.r2 >= 0.9999);
        assert!(fit.converged);
    }

    #[test]
    fn joint_single_d_not_converged() {
        let grid: Vec<JointPoint> = reference_grid()
            .into_iter()
            .map(|g| JointPoint { d: 1e5, ..g })
            .enumerate()
            .map(|(i, g)| JointPoint { y: g.y + 1e-3 * i as f64, ..g })
            .collect();
        let fit = fit_joint(&grid, &FitConfig::default()).unwrap();
        assert!(!fit.converged);
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pts.csv");
        std::fs::write(&path, "x,y\n1,1\n2,0.5\n").unwrap();
        let p = read_points(&path).unwrap();
        assert_eq!(p[1], ScalingPoint { x: 2.0, y: 0.5 });
        std::fs::write(&path, "x,y\n1,oops\n").unwrap();
        assert!(matches!(read_points(&path).unwrap_err(), Error::Malformed { line: 2, .. }));
    }
}
