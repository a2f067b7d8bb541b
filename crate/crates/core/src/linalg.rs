//! One-sided Jacobi SVD.
//!
//! Used for rank decisions, condition numbers and minimum-norm least
//! squares. It stays accurate on exactly rank-deficient inputs (repeated
//! or constant columns), which the generic bidiagonal SVD in nalgebra 0.35
//! does not always handle.

use nalgebra::DMatrix;

/// Thin SVD `a = u · diag(s) · vᵀ`; `s` sorted descending.
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub fn svd(a: &DMatrix<f64>) -> Svd {
    let (m, n) = a.shape();
    if m < n {
        let t = svd(&a.transpose());
        return Svd { u: t.v, s: t.s, v: t.u };
    }
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let alpha = w.column(i).norm_squared();
                let beta = w.column(j).norm_squared();
                let gamma = w.column(i).dot(&w.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..m {
                    let (x, y) = (w[(k, i)], w[(k, j)]);
                    w[(k, i)] = c * x - s * y;
                    w[(k, j)] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (v[(k, i)], v[(k, j)]);
                    v[(k, i)] = c * x - s * y;
                    v[(k, j)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let mut u = DMatrix::zeros(m, n);
    let mut vs = DMatrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        s.push(sigma);
        if sigma > 0.0 {
            u.set_column(dst, &(w.column(src) / sigma));
        }
        vs.set_column(dst, &v.column(src));
    }
    Svd { u, s, v: vs }
}

/// Singular values, descending.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    svd(a).s
}

/// Default numerical-rank tolerance `σ_max · max(m, n) · ε`.
pub fn rank_tolerance(s: &[f64], m: usize, n: usize) -> f64 {
    s.first().copied().unwrap_or(0.0) * m.max(n) as f64 * f64::EPSILON
}

/// `σ_max / σ_min`, infinite when the smallest singular value is zero.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&max), Some(&min)) if min > 0.0 => max / min,
        _ => f64::INFINITY,
    }
}

/// Minimum-norm least-squares solution of `a · x = b`, ignoring singular
/// values at or below `tol`.
pub fn min_norm_solve(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let Svd { u, s, v } = svd(a);
    let mut uty = u.transpose() * b;
    for (k, &sigma) in s.iter().enumerate() {
        let scale = if sigma > tol { 1.0 / sigma } else { 0.0 };
        uty.row_mut(k).scale_mut(scale);
    }
    v * uty
}
