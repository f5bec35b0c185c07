use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{fit_power_law, FitError, PowerLawFit, RunRecord};
use crate::arch::ArchKind;

/// Relative width of a token-to-parameter bucket.
pub const DEFAULT_RATIO_TOLERANCE: f64 = 0.02;

/// `L(C) = lambda * C^-eta` fitted to the runs of one architecture at one
/// token-to-parameter ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OvertrainGroup {
    pub kind: ArchKind,
    /// Mean `D / N` of the bucket.
    pub ratio: f64,
    pub n_runs: usize,
    pub lambda: f64,
    pub eta: f64,
    pub fit: PowerLawFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvertrainResult {
    /// Sorted by kind, then ratio.
    pub groups: Vec<OvertrainGroup>,
    /// `(kind, ratio, runs)` of buckets that had too few runs to fit.
    pub skipped: Vec<(ArchKind, f64, usize)>,
}

/// Buckets runs by architecture and token-to-parameter ratio and fits loss
/// against compute within each bucket.
///
/// Runs are sorted by ratio; a bucket starts at the smallest unassigned ratio
/// and takes every ratio within `tolerance` of it, relatively.
pub fn fit_overtraining(runs: &[RunRecord], tolerance: f64) -> Result<OvertrainResult, FitError> {
    if !(tolerance.is_finite() && tolerance >= 0.0) {
        return Err(FitError::InvalidOption("ratio tolerance must be >= 0"));
    }
    for r in runs {
        r.validate()?;
    }
    let mut sorted: Vec<&RunRecord> = runs.iter().collect();
    sorted.sort_by(|a, b| (a.kind as u8).cmp(&(b.kind as u8)).then(a.ratio().total_cmp(&b.ratio())));

    let mut result = OvertrainResult { groups: Vec::new(), skipped: Vec::new() };
    let mut i = 0;
    while i < sorted.len() {
        let (kind, anchor) = (sorted[i].kind, sorted[i].ratio());
        let mut j = i;
        while j < sorted.len() && sorted[j].kind == kind && (sorted[j].ratio() - anchor) <= tolerance * anchor {
            j += 1;
        }
        let bucket = &sorted[i..j];
        let ratio = bucket.iter().map(|r| r.ratio()).sum::<f64>() / bucket.len() as f64;
        let xs: Vec<f64> = bucket.iter().map(|r| r.c).collect();
        let ys: Vec<f64> = bucket.iter().map(|r| r.loss).collect();
        match fit_power_law(&xs, &ys) {
            Ok(fit) if bucket.len() >= 2 => result.groups.push(OvertrainGroup {
                kind,
                ratio,
                n_runs: bucket.len(),
                lambda: fit.coefficient,
                eta: -fit.exponent,
                fit,
            }),
            _ => result.skipped.push((kind, ratio, bucket.len())),
        }
        i = j;
    }
    Ok(result)
}
