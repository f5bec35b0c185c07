//! Small dense least squares via Householder QR.

use alloc::vec;
use alloc::vec::Vec;
use crate::math;

/// Solution of `min ||A x - y||` for a tall row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LstsqSolution {
    pub x: Vec<f64>,
    pub residual_ss: f64,
}

/// Solves a full-rank least-squares problem. Columns are scaled to unit norm
/// before factorization; returns `None` if any column is (numerically) a
/// combination of the others.
pub(crate) fn lstsq(rows: &[Vec<f64>], y: &[f64]) -> Option<LstsqSolution> {
    let m = rows.len();
    let n = rows.first()?.len();
    if n == 0 || m < n || y.len() != m || rows.iter().any(|r| r.len() != n) {
        return None;
    }
    let mut a: Vec<Vec<f64>> = rows.to_vec();
    let mut b = y.to_vec();

    let mut scale = vec![0.0; n];
    for (j, s) in scale.iter_mut().enumerate() {
        let norm = math::sqrt(a.iter().map(|r| r[j] * r[j]).sum::<f64>());
        if !(norm > 0.0 && norm.is_finite()) {
            return None;
        }
        *s = norm;
        for r in a.iter_mut() {
            r[j] /= norm;
        }
    }

    let mut diag = vec![0.0; n];
    for k in 0..n {
        let norm = math::sqrt((k..m).map(|i| a[i][k] * a[i][k]).sum::<f64>());
        if norm < 1e-10 {
            return None;
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| a[i][k]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        diag[k] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k + 1..n {
            let dot: f64 = (k..m).map(|i| v[i - k] * a[i][j]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                a[i][j] -= f * v[i - k];
            }
        }
        let dot: f64 = (k..m).map(|i| v[i - k] * b[i]).sum();
        let f = 2.0 * dot / vnorm2;
        for i in k..m {
            b[i] -= f * v[i - k];
        }
    }

    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = b[k];
        for j in k + 1..n {
            s -= a[k][j] * x[j];
        }
        x[k] = s / diag[k];
    }
    for (xi, s) in x.iter_mut().zip(&scale) {
        *xi /= s;
    }
    let residual_ss = b[n..].iter().map(|r| r * r).sum();
    Some(LstsqSolution { x, residual_ss })
}
