use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::FitError;
use crate::linalg::lstsq;
use crate::math;

/// `y = coefficient * x^exponent`, fitted by least squares in log10 space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub coefficient: f64,
    pub exponent: f64,
    pub r_squared: f64,
    /// Largest absolute log10 residual on the fit data.
    pub max_log_residual: f64,
    pub n_points: usize,
}

impl PowerLawFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.coefficient * math::powf(x, self.exponent)
    }
}

fn log10_all(v: &[f64]) -> Result<Vec<f64>, FitError> {
    v.iter()
        .map(|&x| if x.is_finite() && x > 0.0 { Ok(math::log10(x)) } else { Err(FitError::NonPositiveInput) })
        .collect()
}

pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<PowerLawFit, FitError> {
    if xs.len() != ys.len() {
        return Err(FitError::InvalidOption("xs and ys differ in length"));
    }
    if xs.len() < 2 {
        return Err(FitError::InsufficientData("a power law needs at least 2 points"));
    }
    let lx = log10_all(xs)?;
    let ly = log10_all(ys)?;
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 1e-24 * (1.0 + mx * mx) {
        return Err(FitError::Degenerate);
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;

    let mut ss_res = 0.0;
    let mut max_res: f64 = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        let r = y - (intercept + slope * x);
        ss_res += r * r;
        max_res = max_res.max(r.abs());
    }
    let ss_tot: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok(PowerLawFit {
        coefficient: math::powf(10.0, intercept),
        exponent: slope,
        r_squared,
        max_log_residual: max_res,
        n_points: xs.len(),
    })
}

/// Quadratic `c2 u^2 + c1 u + c0` in `u = log10(x)` fitted to an IsoFLOP profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolaFit {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
    pub optimum_x: Option<f64>,
    pub optimum_loss: Option<f64>,
    /// The parabola is convex and its vertex lies inside the swept range.
    pub interior: bool,
    pub x_min: f64,
    pub x_max: f64,
}

/// Fits loss against `log10(x)` with a parabola and locates its minimum.
///
/// A parabola with non-positive curvature is returned with `interior = false`
/// and no optimum.
pub fn fit_isoflop_profile(points: &[(f64, f64)]) -> Result<ParabolaFit, FitError> {
    if points.len() < 3 {
        return Err(FitError::InsufficientData("an IsoFLOP profile needs at least 3 points"));
    }
    if points.iter().any(|p| !p.1.is_finite()) {
        return Err(FitError::NonPositiveInput);
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let lx = log10_all(&xs)?;
    let mut sorted = lx.clone();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() < 3 {
        return Err(FitError::Degenerate);
    }
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let m = lx.iter().sum::<f64>() / lx.len() as f64;
    let rows: Vec<Vec<f64>> = lx.iter().map(|x| vec![1.0, x - m, (x - m) * (x - m)]).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let sol = lstsq(&rows, &ys).ok_or(FitError::Degenerate)?;
    let (c, b, a) = (sol.x[0], sol.x[1], sol.x[2]);

    let span = hi - lo;
    let y_mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let y_spread = ys.iter().map(|y| (y - y_mean).abs()).fold(0.0, f64::max);
    let curvature_scale = (b.abs() * span).max(y_spread).max(f64::MIN_POSITIVE);
    let convex = a * span * span > 1e-9 * curvature_scale;

    let (optimum_x, optimum_loss, interior) = if convex {
        let u = -b / (2.0 * a);
        let log_opt = m + u;
        (Some(math::powf(10.0, log_opt)), Some(c - b * b / (4.0 * a)), log_opt >= lo && log_opt <= hi)
    } else {
        (None, None, false)
    };
    Ok(ParabolaFit {
        c2: a,
        c1: b - 2.0 * a * m,
        c0: a * m * m - b * m + c,
        optimum_x,
        optimum_loss,
        interior,
        x_min: math::powf(10.0, lo),
        x_max: math::powf(10.0, hi),
    })
}
