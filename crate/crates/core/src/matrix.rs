//! Dense kernels for the small symmetric matrices used throughout: cyclic
//! Jacobi eigendecomposition and a handful of products. Dimensions here are
//! tiny (2..=10), so simplicity beats cleverness.

/// Off-diagonal floor for the Jacobi sweep, scaled by max(1, max|entry|).
const JACOBI_OFF_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 64;

pub(crate) fn max_abs(data: &[f64]) -> f64 {
    data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Eigenvalues and eigenvectors of a symmetric matrix via cyclic Jacobi
/// rotations. Returns `(lambdas, v)` with `v` row-major and columns holding
/// the eigenvectors, so that `vᵀ · a · v = diag(lambdas)`.
///
/// The input is symmetrized as (a + aᵀ)/2 before sweeping; asymmetry beyond
/// the caller's validation tolerance is the caller's problem.
pub(crate) fn jacobi_eigen(n: usize, a: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), n * n);
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = 0.5 * (a[i * n + j] + a[j * n + i]);
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    if n < 2 {
        return (vec![m.first().copied().unwrap_or(0.0)], v);
    }
    let tol = JACOBI_OFF_TOL * max_abs(&m).max(1.0);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(m[p * n + q].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..(n - 1) {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() <= tol * 1e-3 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                let app = m[p * n + p];
                let aqq = m[q * n + q];
                m[p * n + p] = app - t * apq;
                m[q * n + q] = aqq + t * apq;
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    let new_kp = akp - s * (akq + tau * akp);
                    let new_kq = akq + s * (akp - tau * akq);
                    m[k * n + p] = new_kp;
                    m[p * n + k] = new_kp;
                    m[k * n + q] = new_kq;
                    m[q * n + k] = new_kq;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let lambdas = (0..n).map(|i| m[i * n + i]).collect();
    (lambdas, v)
}

/// Jacobi eigendecomposition with eigenvalues sorted descending; ties keep
/// the lower original index first (the sort is stable). Columns of the
/// returned matrix are permuted to match.
pub(crate) fn sorted_eigen_desc(n: usize, a: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (lambdas, v) = jacobi_eigen(n, a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        lambdas[j]
            .partial_cmp(&lambdas[i])
            .expect("finite eigenvalues")
    });
    let sorted: Vec<f64> = order.iter().map(|&k| lambdas[k]).collect();
    let mut vs = vec![0.0; n * n];
    for (new_col, &old_col) in order.iter().enumerate() {
        for row in 0..n {
            vs[row * n + new_col] = v[row * n + old_col];
        }
    }
    (sorted, vs)
}

pub(crate) fn min_eigenvalue(n: usize, a: &[f64]) -> f64 {
    let (lambdas, _) = jacobi_eigen(n, a);
    lambdas.iter().fold(f64::INFINITY, |acc, v| acc.min(*v))
}

/// Diagonal of rᵀ · s · r for row-major square matrices.
pub(crate) fn rotated_diagonal(n: usize, r: &[f64], s: &[f64]) -> Vec<f64> {
    let mut diag = vec![0.0; n];
    for (i, d) in diag.iter_mut().enumerate() {
        let mut acc = 0.0;
        for p in 0..n {
            for q in 0..n {
                acc += r[p * n + i] * s[p * n + q] * r[q * n + i];
            }
        }
        *d = acc;
    }
    diag
}

/// Solve the symmetric positive-definite system `a x = b` through the
/// eigendecomposition, returning the solution together with the spectral
/// condition number. `None` when the matrix is numerically singular.
pub(crate) fn solve_spd_eigen(n: usize, a: &[f64], b: &[f64]) -> Option<(Vec<f64>, f64)> {
    let (lambdas, v) = jacobi_eigen(n, a);
    let lam_max = lambdas.iter().fold(0.0_f64, |acc, l| acc.max(*l));
    let lam_min = lambdas.iter().fold(f64::INFINITY, |acc, l| acc.min(*l));
    if !lam_min.is_finite() || lam_min <= 0.0 || !lam_max.is_finite() {
        return None;
    }
    // x = V diag(1/λ) Vᵀ b
    let mut vt_b = vec![0.0; n];
    for (k, out) in vt_b.iter_mut().enumerate() {
        *out = (0..n).map(|row| v[row * n + k] * b[row]).sum();
    }
    let mut x = vec![0.0; n];
    for (row, out) in x.iter_mut().enumerate() {
        *out = (0..n).map(|k| v[row * n + k] * vt_b[k] / lambdas[k]).sum();
    }
    Some((x, lam_max / lam_min))
}
