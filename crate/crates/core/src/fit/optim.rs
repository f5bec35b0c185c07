//! Box-constrained limited-memory BFGS with projected backtracking.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn project(&self, x: &mut [f64]) {
        for ((xi, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *xi = xi.clamp(*lo, *hi);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimOptions {
    pub max_iter: usize,
    /// Stop when the infinity norm of the projected gradient falls below this.
    pub pgtol: f64,
    /// Stop when an accepted step moves no coordinate by more than
    /// `xtol * (1 + |x|)`.
    pub xtol: f64,
    pub memory: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions { max_iter: 1000, pgtol: 1e-9, xtol: 1e-9, memory: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    Step,
    /// No decrease along the projected steepest-descent path.
    LineSearch,
    MaxIter,
    NonFinite,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(self, Termination::Gradient | Termination::Step | Termination::LineSearch)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub termination: Termination,
}

fn projected_gradient_norm(x: &[f64], g: &[f64], b: &Bounds) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..x.len() {
        let pg = if x[i] <= b.lower[i] && g[i] > 0.0 || x[i] >= b.upper[i] && g[i] < 0.0 { 0.0 } else { g[i] };
        m = m.max(pg.abs());
    }
    m
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` over a box. `f` writes the gradient into its second argument
/// and returns the objective value.
pub fn minimize_bounded<F>(mut f: F, x0: &[f64], bounds: &Bounds, opts: &OptimOptions) -> OptimResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];
    let mut alpha = vec![0.0; opts.memory];

    let finish = |x: Vec<f64>, value: f64, iterations: usize, termination: Termination| OptimResult {
        x,
        value,
        iterations,
        termination,
    };
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return finish(x, fx, 0, Termination::NonFinite);
    }

    for iter in 0..opts.max_iter {
        if projected_gradient_norm(&x, &g, bounds) <= opts.pgtol {
            return finish(x, fx, iter, Termination::Gradient);
        }
        let free: Vec<bool> = (0..n)
            .map(|i| !(x[i] <= bounds.lower[i] && g[i] > 0.0 || x[i] >= bounds.upper[i] && g[i] < 0.0))
            .collect();

        let mut d: Vec<f64> = (0..n).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();
        if memory.is_empty() {
            let gmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if gmax > 1.0 {
                d.iter_mut().for_each(|v| *v /= gmax);
            }
        } else {
            for (k, (s, y, rho)) in memory.iter().enumerate().rev() {
                alpha[k] = rho * dot(s, &d);
                d.iter_mut().zip(y).for_each(|(di, yi)| *di -= alpha[k] * yi);
            }
            let (s, y, _) = memory.back().expect("non-empty memory");
            let scale = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= scale);
            for (k, (s, y, rho)) in memory.iter().enumerate() {
                let beta = rho * dot(y, &d);
                d.iter_mut().zip(s).for_each(|(di, si)| *di += (alpha[k] - beta) * si);
            }
            for i in 0..n {
                if !free[i] {
                    d[i] = 0.0;
                }
            }
            if dot(&d, &g) >= 0.0 {
                memory.clear();
                d = (0..n).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();
            }
        }

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                xn[i] = x[i] + step * d[i];
            }
            bounds.project(&mut xn);
            let decrease: f64 = (0..n).map(|i| g[i] * (xn[i] - x[i])).sum();
            let fnew = f(&xn, &mut gn);
            if fnew.is_finite() && fnew <= fx + 1e-4 * decrease && decrease < 0.0 {
                accepted = true;
                let s: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
                let y: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
                let sy = dot(&s, &y);
                let moved = (0..n).all(|i| s[i].abs() <= opts.xtol * (1.0 + x[i].abs()));
                x.copy_from_slice(&xn);
                g.copy_from_slice(&gn);
                fx = fnew;
                if moved {
                    return finish(x, fx, iter + 1, Termination::Step);
                }
                if sy > 1e-12 * math::sqrt(dot(&s, &s) * dot(&y, &y)) {
                    if memory.len() == opts.memory {
                        memory.pop_front();
                    }
                    memory.push_back((s, y, 1.0 / sy));
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if memory.is_empty() {
                return finish(x, fx, iter + 1, Termination::LineSearch);
            }
            memory.clear();
        }
    }
    finish(x, fx, opts.max_iter, Termination::MaxIter)
}
