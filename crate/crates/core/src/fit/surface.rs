//! Parametric loss surface `L(N, D) = E + (A N^-alpha + B D^-beta)^gamma`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::optim::{minimize_bounded, Bounds, OptimOptions};
use super::{FitError, RunRecord};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSurfaceFit {
    #[serde(rename = "logA")]
    pub log_a: f64,
    #[serde(rename = "logB")]
    pub log_b: f64,
    #[serde(rename = "logE")]
    pub log_e: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub huber_delta: f64,
    /// Mean squared natural-log residual on the fit data.
    pub fit_mse: f64,
    /// Index of the winning start in grid iteration order.
    pub grid_index: usize,
    pub converged_starts: usize,
    pub total_starts: usize,
}

impl LossSurfaceFit {
    /// A surface with the given coefficients and no fit statistics.
    pub fn from_coefficients(log_a: f64, log_b: f64, log_e: f64, alpha: f64, beta: f64, gamma: f64) -> Self {
        LossSurfaceFit {
            log_a,
            log_b,
            log_e,
            alpha,
            beta,
            gamma,
            huber_delta: 0.0,
            fit_mse: 0.0,
            grid_index: 0,
            converged_starts: 0,
            total_starts: 0,
        }
    }

    pub fn params(&self) -> [f64; 6] {
        [self.log_a, self.log_b, self.log_e, self.alpha, self.beta, self.gamma]
    }

    pub fn predict(&self, n: f64, d: f64) -> f64 {
        predict_loss(self, n, d)
    }

    /// The `(A N^-alpha + B D^-beta)^gamma` part of the prediction.
    pub fn reducible(&self, n: f64, d: f64) -> f64 {
        math::exp(self.gamma * power_lse(self.log_a, self.log_b, self.alpha, self.beta, math::ln(n), math::ln(d)).0)
    }
}

/// `log(e^a + e^b)` and the weight `e^a / (e^a + e^b)`.
fn lse2(a: f64, b: f64) -> (f64, f64) {
    let t = math::exp(-(a - b).abs());
    let w_max = 1.0 / (1.0 + t);
    let w_a = if a >= b { w_max } else { t * w_max };
    (a.max(b) + math::ln_1p(t), w_a)
}

/// `log(A N^-alpha + B D^-beta)` and the weight of the `A` term.
fn power_lse(log_a: f64, log_b: f64, alpha: f64, beta: f64, ln_n: f64, ln_d: f64) -> (f64, f64) {
    lse2(log_a - alpha * ln_n, log_b - beta * ln_d)
}

pub fn predict_loss(fit: &LossSurfaceFit, n: f64, d: f64) -> f64 {
    math::exp(fit.log_e) + fit.reducible(n, d)
}

/// Cartesian grid of optimizer starts, iterated with `log_a` outermost and
/// `gamma` innermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitGrid {
    #[serde(rename = "logA")]
    pub log_a: Vec<f64>,
    #[serde(rename = "logB")]
    pub log_b: Vec<f64>,
    #[serde(rename = "logE")]
    pub log_e: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl Default for InitGrid {
    fn default() -> Self {
        InitGrid {
            log_a: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            log_b: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            log_e: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            alpha: vec![0.0, 0.2, 0.5, 1.0],
            beta: vec![0.0, 0.2, 0.5, 1.0],
            gamma: vec![0.0, 0.5, 1.0, 1.5],
        }
    }
}

impl InitGrid {
    pub fn len(&self) -> usize {
        self.log_a.len() * self.log_b.len() * self.log_e.len() * self.alpha.len() * self.beta.len() * self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> impl Iterator<Item = [f64; 6]> + '_ {
        self.log_a.iter().flat_map(move |&a| {
            self.log_b.iter().flat_map(move |&b| {
                self.log_e.iter().flat_map(move |&e| {
                    self.alpha.iter().flat_map(move |&al| {
                        self.beta.iter().flat_map(move |&be| self.gamma.iter().map(move |&g| [a, b, e, al, be, g]))
                    })
                })
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceFitOptions {
    pub huber_delta: f64,
    /// Fix `gamma = 1`.
    pub freeze_gamma: bool,
    pub optimizer: OptimOptions,
    pub grid: InitGrid,
}

impl Default for SurfaceFitOptions {
    fn default() -> Self {
        SurfaceFitOptions {
            huber_delta: 1e-3,
            freeze_gamma: false,
            optimizer: OptimOptions::default(),
            grid: InitGrid::default(),
        }
    }
}

/// Parameter box in `[logA, logB, logE, alpha, beta, gamma]` order.
pub fn surface_bounds(freeze_gamma: bool) -> Bounds {
    let (g_lo, g_hi) = if freeze_gamma { (1.0, 1.0) } else { (0.01, 3.0) };
    Bounds { lower: vec![-5.0, -5.0, -2.0, 0.0, 0.0, g_lo], upper: vec![30.0, 30.0, 2.0, 2.0, 2.0, g_hi] }
}

struct Problem {
    ln_n: Vec<f64>,
    ln_d: Vec<f64>,
    ln_loss: Vec<f64>,
    delta: f64,
}

impl Problem {
    fn residual(&self, p: &[f64], i: usize) -> (f64, [f64; 6]) {
        let [log_a, log_b, log_e, alpha, beta, gamma] = [p[0], p[1], p[2], p[3], p[4], p[5]];
        let (s, w1) = power_lse(log_a, log_b, alpha, beta, self.ln_n[i], self.ln_d[i]);
        let q = gamma * s;
        let (pred, we) = lse2(log_e, q);
        let wp = 1.0 - we;
        let w2 = 1.0 - w1;
        let jac = [
            wp * gamma * w1,
            wp * gamma * w2,
            we,
            -wp * gamma * w1 * self.ln_n[i],
            -wp * gamma * w2 * self.ln_d[i],
            wp * s,
        ];
        (pred - self.ln_loss[i], jac)
    }

    fn objective(&self, p: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for i in 0..self.ln_n.len() {
            let (r, jac) = self.residual(p, i);
            let (h, dh) = if r.abs() <= self.delta {
                (0.5 * r * r, r)
            } else {
                (self.delta * (r.abs() - 0.5 * self.delta), self.delta * r.signum())
            };
            total += h;
            for k in 0..6 {
                grad[k] += dh * jac[k];
            }
        }
        total
    }

    fn mse(&self, p: &[f64]) -> f64 {
        let n = self.ln_n.len();
        (0..n).map(|i| self.residual(p, i).0).map(|r| r * r).sum::<f64>() / n as f64
    }
}

fn distinct(values: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

/// Fits the loss surface with a bounded quasi-Newton run from every grid
/// start and keeps the converged candidate with the lowest MSE of log
/// residuals. Ties go to the earlier grid index.
pub fn fit_loss_surface(runs: &[RunRecord], options: &SurfaceFitOptions) -> Result<LossSurfaceFit, FitError> {
    if runs.len() < 8 {
        return Err(FitError::InsufficientData("the loss surface needs at least 8 runs"));
    }
    for r in runs {
        r.validate()?;
    }
    if distinct(runs.iter().map(|r| r.n)) < 2 || distinct(runs.iter().map(|r| r.d)) < 2 {
        return Err(FitError::InsufficientData("the loss surface needs at least 2 distinct N and 2 distinct D"));
    }
    if !(options.huber_delta.is_finite() && options.huber_delta > 0.0) {
        return Err(FitError::InvalidOption("huber_delta must be > 0"));
    }
    if options.grid.is_empty() {
        return Err(FitError::InvalidOption("the initialization grid is empty"));
    }
    let problem = Problem {
        ln_n: runs.iter().map(|r| math::ln(r.n)).collect(),
        ln_d: runs.iter().map(|r| math::ln(r.d)).collect(),
        ln_loss: runs.iter().map(|r| math::ln(r.loss)).collect(),
        delta: options.huber_delta,
    };
    let bounds = surface_bounds(options.freeze_gamma);

    let mut best: Option<([f64; 6], f64, usize)> = None;
    let mut converged = 0;
    for (index, start) in options.grid.points().enumerate() {
        let result = minimize_bounded(|p, g| problem.objective(p, g), &start, &bounds, &options.optimizer);
        if !result.termination.converged() {
            continue;
        }
        converged += 1;
        let mse = problem.mse(&result.x);
        if !mse.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|(_, m, _)| mse < *m) {
            let mut p = [0.0; 6];
            p.copy_from_slice(&result.x);
            best = Some((p, mse, index));
        }
    }
    let (p, fit_mse, grid_index) = best.ok_or(FitError::NoConvergence)?;
    Ok(LossSurfaceFit {
        log_a: p[0],
        log_b: p[1],
        log_e: p[2],
        alpha: p[3],
        beta: p[4],
        gamma: p[5],
        huber_delta: options.huber_delta,
        fit_mse,
        grid_index,
        converged_starts: converged,
        total_starts: options.grid.len(),
    })
}
