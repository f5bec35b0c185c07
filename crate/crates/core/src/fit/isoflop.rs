use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{fit_isoflop_profile, fit_power_law, FitError, ParabolaFit, PowerLawFit, RunRecord};
use crate::arch::ArchKind;
use crate::math;

/// Relative width of a compute-budget bucket.
pub const DEFAULT_BUDGET_TOLERANCE: f64 = 0.05;

/// Parabolas over `N` and over `D` for the runs of one budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsoflopProfile {
    /// Geometric mean of the bucket's training FLOPs.
    #[serde(rename = "H")]
    pub budget: f64,
    pub n_runs: usize,
    pub over_n: ParabolaFit,
    pub over_d: ParabolaFit,
}

/// `N*(H) = A' H^a` and `D*(H) = B' H^b` for one architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoflopLaws {
    pub kind: ArchKind,
    /// Sorted by budget.
    pub profiles: Vec<IsoflopProfile>,
    /// `(H, runs)` of buckets with fewer than 3 runs.
    pub skipped: Vec<(f64, usize)>,
    pub n_opt: PowerLawFit,
    pub d_opt: PowerLawFit,
}

/// Buckets the runs of `kind` by compute, fits a parabola per bucket and
/// power laws through the interior optima.
pub fn fit_isoflop_laws(runs: &[RunRecord], kind: ArchKind, tolerance: f64) -> Result<IsoflopLaws, FitError> {
    if !(tolerance.is_finite() && tolerance >= 0.0) {
        return Err(FitError::InvalidOption("budget tolerance must be >= 0"));
    }
    let mut sorted: Vec<&RunRecord> = runs.iter().filter(|r| r.kind == kind).collect();
    for r in &sorted {
        r.validate()?;
    }
    sorted.sort_by(|a, b| a.c.total_cmp(&b.c));

    let mut profiles = Vec::new();
    let mut skipped = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let anchor = sorted[i].c;
        let mut j = i;
        while j < sorted.len() && sorted[j].c - anchor <= tolerance * anchor {
            j += 1;
        }
        let bucket = &sorted[i..j];
        let budget = anchor * math::exp(bucket.iter().map(|r| math::ln(r.c / anchor)).sum::<f64>() / bucket.len() as f64);
        let over = |x: fn(&RunRecord) -> f64| -> Result<ParabolaFit, FitError> {
            let pts: Vec<(f64, f64)> = bucket.iter().map(|r| (x(r), r.loss)).collect();
            fit_isoflop_profile(&pts)
        };
        match (bucket.len() >= 3).then(|| (over(|r| r.n), over(|r| r.d))) {
            Some((Ok(over_n), Ok(over_d))) => profiles.push(IsoflopProfile { budget, n_runs: bucket.len(), over_n, over_d }),
            _ => skipped.push((budget, bucket.len())),
        }
        i = j;
    }

    let optima = |pick: fn(&IsoflopProfile) -> &ParabolaFit| -> (Vec<f64>, Vec<f64>) {
        profiles
            .iter()
            .filter_map(|p| {
                let fit = pick(p);
                fit.optimum_x.filter(|_| fit.interior).map(|x| (p.budget, x))
            })
            .unzip()
    };
    let (hn, ns) = optima(|p| &p.over_n);
    let (hd, ds) = optima(|p| &p.over_d);
    if hn.len() < 2 || hd.len() < 2 {
        return Err(FitError::InsufficientData("at least 2 budgets need an interior optimum"));
    }
    Ok(IsoflopLaws { kind, n_opt: fit_power_law(&hn, &ns)?, d_opt: fit_power_law(&hd, &ds)?, profiles, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    /// Runs along `C = 6 N D` with loss a parabola in `log10 N` centred on
    /// `N* = 0.1 H^0.5`.
    fn profile(h: f64) -> Vec<RunRecord> {
        let center = math::log10(0.1 * math::sqrt(h));
        (0..7)
            .map(|i| {
                let u = center - 0.6 + 0.2 * i as f64;
                let n = math::powf(10.0, u);
                let d = h / (6.0 * n);
                RunRecord { kind: ArchKind::Xlstm, n, d, t_ctx: 2048, c: h, loss: 2.0 + 0.3 * (u - center) * (u - center) }
            })
            .collect()
    }

    #[test]
    fn recovers_exponents() {
        let mut runs = vec![];
        for h in [1e18, 1e19, 1e20, 1e21] {
            runs.extend(profile(h));
        }
        runs.push(RunRecord { kind: ArchKind::Xlstm, n: 1e9, d: 1e10, t_ctx: 2048, c: 1e24, loss: 2.0 });
        let laws = fit_isoflop_laws(&runs, ArchKind::Xlstm, DEFAULT_BUDGET_TOLERANCE).unwrap();
        assert_eq!(laws.profiles.len(), 4);
        assert_eq!(laws.skipped, vec![(1e24, 1)]);
        assert!((laws.n_opt.exponent - 0.5).abs() < 1e-9);
        assert!((laws.n_opt.coefficient - 0.1).abs() < 1e-9);
        // D* = H / (6 N*) follows from the constraint.
        assert!((laws.d_opt.exponent - 0.5).abs() < 1e-9);
        assert!(fit_isoflop_laws(&runs, ArchKind::Transformer, 0.05).is_err());
    }
}
