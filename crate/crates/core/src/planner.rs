//! Compute-optimal allocations, Token/Param experiment grids and
//! cross-architecture comparisons built on fitted laws.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::arch::{count_params, ArchConfig, ArchKind, ParamError};
use crate::fit::{LossSurfaceFit, PowerLawFit};
use crate::flops::{training_compute, CostFactors, FlopError};

/// Token-to-parameter ratios of the overtraining sweep.
pub const DEFAULT_TOKEN_PARAM_RATIOS: [f64; 7] = [22.0, 44.0, 110.0, 220.0, 550.0, 1100.0, 2200.0];

/// Relative tolerance when matching a parameter count to a table entry.
pub const DEFAULT_MATCH_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("compute budget must be finite and > 0")]
    InvalidBudget,
    #[error("parameter counts and ratios must be finite and > 0")]
    InvalidGrid,
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Flops(#[from] FlopError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    #[serde(rename = "H")]
    pub budget: f64,
    #[serde(rename = "N_star")]
    pub n_star: f64,
    #[serde(rename = "D_star")]
    pub d_star: f64,
    #[serde(rename = "M_star")]
    pub m_star: f64,
    pub fit_n: PowerLawFit,
    pub fit_d: PowerLawFit,
    /// Training FLOPs of the plan on a concrete configuration, when realized.
    pub realized_compute: Option<f64>,
    /// `realized_compute / H - 1`.
    pub budget_deviation: Option<f64>,
}

/// `N* = A' H^a`, `D* = B' H^b`.
pub fn compute_optimal_alloc(fit_n: &PowerLawFit, fit_d: &PowerLawFit, budget: f64) -> Result<AllocationPlan, PlanError> {
    if !(budget.is_finite() && budget > 0.0) {
        return Err(PlanError::InvalidBudget);
    }
    let n_star = fit_n.predict(budget);
    let d_star = fit_d.predict(budget);
    Ok(AllocationPlan {
        budget,
        n_star,
        d_star,
        m_star: d_star / n_star,
        fit_n: *fit_n,
        fit_d: *fit_d,
        realized_compute: None,
        budget_deviation: None,
    })
}

/// A named configuration with its exact parameter count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEntry {
    pub name: alloc::string::String,
    pub config: ArchConfig,
    pub params: u64,
}

/// Configurations that parameter counts are resolved against.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfigTable {
    pub entries: Vec<ConfigEntry>,
    pub tolerance: f64,
}

impl ConfigTable {
    pub fn new(configs: impl IntoIterator<Item = (alloc::string::String, ArchConfig)>) -> Result<Self, PlanError> {
        let mut entries = Vec::new();
        for (name, config) in configs {
            let params = count_params(&config)?.total;
            entries.push(ConfigEntry { name, config, params });
        }
        Ok(ConfigTable { entries, tolerance: DEFAULT_MATCH_TOLERANCE })
    }

    /// The entry nearest to `n` in relative terms, if within tolerance. Ties
    /// go to the earlier entry.
    pub fn resolve(&self, n: f64) -> Option<&ConfigEntry> {
        self.nearest(n, |_| true)
    }

    /// Like [`ConfigTable::resolve`], restricted to one architecture family.
    pub fn resolve_kind(&self, kind: ArchKind, n: f64) -> Option<&ConfigEntry> {
        self.nearest(n, |e| e.config.kind == kind)
    }

    pub fn get(&self, name: &str) -> Option<&ConfigEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    fn nearest(&self, n: f64, keep: impl Fn(&ConfigEntry) -> bool) -> Option<&ConfigEntry> {
        let rel = |e: &ConfigEntry| (e.params as f64 / n - 1.0).abs();
        let mut best: Option<&ConfigEntry> = None;
        for e in self.entries.iter().filter(|e| keep(e)) {
            if best.is_none_or(|b| rel(e) < rel(b)) {
                best = Some(e);
            }
        }
        best.filter(|e| rel(e) <= self.tolerance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    #[serde(rename = "N")]
    pub n: f64,
    #[serde(rename = "M")]
    pub ratio: f64,
    #[serde(rename = "D")]
    pub d: f64,
    /// Training FLOPs; absent when no configuration matched `N`.
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub config: Option<alloc::string::String>,
}

/// Every `(N, M)` pair with `D = M N`, in `N`-major order.
pub fn plan_token_param_grid(
    n_list: &[f64],
    ratios: &[f64],
    table: Option<&ConfigTable>,
    context: u64,
    factors: &CostFactors,
    backward_multiplier: f64,
) -> Result<Vec<GridPoint>, PlanError> {
    let valid = |v: &f64| v.is_finite() && *v > 0.0;
    if !n_list.iter().all(valid) || !ratios.iter().all(valid) {
        return Err(PlanError::InvalidGrid);
    }
    let mut out = Vec::with_capacity(n_list.len() * ratios.len());
    for &n in n_list {
        let entry = table.and_then(|t| t.resolve(n));
        for &m in ratios {
            let d = m * n;
            let c = match entry {
                Some(e) => Some(training_compute(&e.config, context, d, factors, backward_multiplier)?.flops),
                None => None,
            };
            out.push(GridPoint { n, ratio: m, d, c, config: entry.map(|e| e.name.clone()) });
        }
    }
    Ok(out)
}

/// Fills in the realized training compute of `plan` on `config`.
pub fn realize_plan(
    plan: &AllocationPlan,
    config: &ArchConfig,
    context: u64,
    factors: &CostFactors,
    backward_multiplier: f64,
) -> Result<AllocationPlan, PlanError> {
    let c = training_compute(config, context, plan.d_star, factors, backward_multiplier)?.flops;
    Ok(AllocationPlan { realized_compute: Some(c), budget_deviation: Some(c / plan.budget - 1.0), ..*plan })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    A,
    B,
    Tie,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetComparison {
    #[serde(rename = "H")]
    pub budget: f64,
    pub loss_a: f64,
    pub loss_b: f64,
    /// `loss_b - loss_a`; positive when `a` is better.
    pub margin: f64,
    pub winner: Winner,
}

/// Predicted losses of two families, each at its own allocation.
pub fn compare_at_budget(
    surface_a: &LossSurfaceFit,
    surface_b: &LossSurfaceFit,
    budget: f64,
    alloc_a: &AllocationPlan,
    alloc_b: &AllocationPlan,
) -> BudgetComparison {
    let loss_a = surface_a.predict(alloc_a.n_star, alloc_a.d_star);
    let loss_b = surface_b.predict(alloc_b.n_star, alloc_b.d_star);
    let margin = loss_b - loss_a;
    let winner = if margin > 0.0 {
        Winner::A
    } else if margin < 0.0 {
        Winner::B
    } else {
        Winner::Tie
    };
    BudgetComparison { budget, loss_a, loss_b, margin, winner }
}
