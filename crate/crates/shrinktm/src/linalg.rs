//! Small dense linear-algebra kernels: Cholesky factorization and triangular
//! solves. The matrices in this crate are at most a few thousand on a side,
//! so straightforward cache-friendly loops are all that is needed.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Lower Cholesky factor of a symmetric positive-definite matrix.
///
/// Only the lower triangle of `a` is read. Fails when a pivot is not
/// strictly positive, which for covariance matrices signals coincident
/// points or a numerically singular conditioning set.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "cholesky needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::numeric(format!(
                "matrix not positive definite at pivot {j} (value {diag:e})"
            )));
        }
        let dsqrt = diag.sqrt();
        l[(j, j)] = dsqrt;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dsqrt;
        }
    }
    Ok(l)
}

/// Solve L x = b with L lower triangular.
pub fn solve_lower(l: &Array2<f64>, b: &[f64]) -> Vec<f64> {
    let n = l.nrows();
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solve L^T x = b with L lower triangular.
pub fn solve_lower_transpose(l: &Array2<f64>, b: &[f64]) -> Vec<f64> {
    let n = l.nrows();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solve (L L^T) x = b given the lower Cholesky factor.
pub fn chol_solve(l: &Array2<f64>, b: &[f64]) -> Vec<f64> {
    solve_lower_transpose(l, &solve_lower(l, b))
}

/// log det(L L^T) = 2 sum log L_ii.
pub fn chol_log_det(l: &Array2<f64>) -> f64 {
    (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
}

/// Quadratic form b^T (L L^T)^{-1} b given the lower Cholesky factor.
pub fn chol_quad_form(l: &Array2<f64>, b: &[f64]) -> f64 {
    let half = solve_lower(l, b);
    half.iter().map(|v| v * v).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean-zero multivariate normal log density given the Cholesky factor of
/// the covariance and a precomputed log determinant.
pub fn mvn_log_density(l: &Array2<f64>, log_det: f64, y: &[f64]) -> f64 {
    let n = y.len() as f64;
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + log_det + chol_quad_form(l, y))
}

/// Dense symmetric solve used by oracle-style checks: a^{-1} b.
pub fn solve_spd(a: &Array2<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let l = cholesky(a)?;
    Ok(chol_solve(&l, b))
}

pub fn mat_vec(a: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    let (n, m) = (a.nrows(), a.ncols());
    debug_assert_eq!(m, x.len());
    let mut out = vec![0.0; n];
    for i in 0..n {
        let row = a.row(i);
        let mut s = 0.0;
        for j in 0..m {
            s += row[j] * x[j];
        }
        out[i] = s;
    }
    out
}

/// Explicit inverse via Cholesky; only used by small test oracles.
pub fn chol_inverse(l: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut inv = Array2::<f64>::zeros((n, n));
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = chol_solve(l, &e);
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    inv
}

pub fn array1(v: Vec<f64>) -> Array1<f64> {
    Array1::from_vec(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn cholesky_matches_hand_factorization() {
        let a = arr2(&[[4.0, 2.0, 0.4], [2.0, 5.0, 1.0], [0.4, 1.0, 3.0]]);
        let l = cholesky(&a).unwrap();
        // reconstruct
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += l[(i, k)] * l[(j, k)];
                }
                assert!((s - a[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = arr2(&[[1.0, 2.0], [2.0, 1.0]]);
        assert!(cholesky(&a).is_err());
    }

    #[test]
    fn solve_round_trip() {
        let a = arr2(&[[4.0, 2.0, 0.4], [2.0, 5.0, 1.0], [0.4, 1.0, 3.0]]);
        let l = cholesky(&a).unwrap();
        let b = [1.0, -2.0, 0.5];
        let x = chol_solve(&l, &b);
        let back = mat_vec(&a, &x);
        for i in 0..3 {
            assert!((back[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn log_det_matches_direct() {
        let a = arr2(&[[2.0, 0.3], [0.3, 1.5]]);
        let l = cholesky(&a).unwrap();
        let det: f64 = 2.0 * 1.5 - 0.3 * 0.3;
        assert!((chol_log_det(&l) - det.ln()).abs() < 1e-13);
    }
}
