//! Scaling-law fitting: loss surfaces, IsoFLOP parabolas, power laws,
//! fixed-ratio overtraining laws and Pareto frontiers.

use serde::{Deserialize, Serialize};

use crate::arch::ArchKind;

mod isoflop;
mod optim;
mod overtrain;
mod pareto;
mod powerlaw;
mod surface;

pub use isoflop::{fit_isoflop_laws, IsoflopLaws, IsoflopProfile, DEFAULT_BUDGET_TOLERANCE};
pub use optim::{minimize_bounded, Bounds, OptimOptions, OptimResult, Termination};
pub use overtrain::{fit_overtraining, OvertrainGroup, OvertrainResult, DEFAULT_RATIO_TOLERANCE};
pub use pareto::pareto_frontier;
pub use powerlaw::{fit_isoflop_profile, fit_power_law, ParabolaFit, PowerLawFit};
pub use surface::{fit_loss_surface, predict_loss, surface_bounds, InitGrid, LossSurfaceFit, SurfaceFitOptions};

/// One training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub kind: ArchKind,
    /// Parameters.
    #[serde(rename = "N")]
    pub n: f64,
    /// Training tokens.
    #[serde(rename = "D")]
    pub d: f64,
    /// Context length.
    #[serde(rename = "T_ctx")]
    pub t_ctx: u64,
    /// Training FLOPs.
    #[serde(rename = "C")]
    pub c: f64,
    /// Final cross-entropy in nats.
    pub loss: f64,
}

impl RunRecord {
    /// Token-to-parameter ratio `D / N`.
    pub fn ratio(&self) -> f64 {
        self.d / self.n
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        for (name, v) in [("N", self.n), ("D", self.d), ("C", self.c), ("loss", self.loss)] {
            if !positive(v) {
                return Err(FitError::InvalidRecord { field: name, value: v });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("insufficient data: {0}")]
    InsufficientData(&'static str),
    #[error("inputs must be finite and positive")]
    NonPositiveInput,
    #[error("degenerate design: the points do not determine the fit")]
    Degenerate,
    #[error("no initialization converged")]
    NoConvergence,
    #[error("invalid run record: {field} = {value} must be finite and > 0")]
    InvalidRecord { field: &'static str, value: f64 },
    #[error("invalid option: {0}")]
    InvalidOption(&'static str),
}
