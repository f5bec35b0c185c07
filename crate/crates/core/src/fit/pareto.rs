use alloc::vec::Vec;

use super::RunRecord;

/// Runs not dominated in (compute, loss), sorted by compute. Exact duplicates
/// of a frontier point are all kept.
pub fn pareto_frontier(runs: &[RunRecord]) -> Vec<RunRecord> {
    let mut sorted: Vec<RunRecord> = runs.to_vec();
    sorted.sort_by(|a, b| a.c.total_cmp(&b.c).then(a.loss.total_cmp(&b.loss)));
    let mut out = Vec::new();
    let mut best = f64::INFINITY;
    let mut i = 0;
    while i < sorted.len() {
        let c = sorted[i].c;
        let group_min = sorted[i].loss;
        let mut j = i;
        while j < sorted.len() && sorted[j].c == c {
            j += 1;
        }
        if group_min < best {
            out.extend(sorted[i..j].iter().filter(|r| r.loss == group_min).copied());
            best = group_min;
        }
        i = j;
    }
    out
}
