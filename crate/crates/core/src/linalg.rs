//! Small dense linear-algebra helpers: pivoted Gaussian elimination, ordinary
//! least squares via normal equations, and power iteration for the leading
//! eigenpair. Everything here is sized for n in the tens, not thousands.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
///
/// `a` is consumed as a working copy. Fails on (numerically) singular systems.
pub fn solve(mut a: Array2<f64>, mut b: Array1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Shape(format!(
            "solve expects square system, got {}x{} with rhs {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    for col in 0..n {
        // Pivot on the largest remaining entry in this column.
        let mut pivot = col;
        for row in col + 1..n {
            if a[[row, col]].abs() > a[[pivot, col]].abs() {
                pivot = row;
            }
        }
        if a[[pivot, col]].abs() < 1e-14 {
            return Err(Error::Singular(format!(
                "pivot {:.3e} at column {col}",
                a[[pivot, col]]
            )));
        }
        if pivot != col {
            for k in 0..n {
                a.swap([col, k], [pivot, k]);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let f = a[[row, col]] / a[[col, col]];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[[row, k]] -= f * a[[col, k]];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[[row, k]] * x[k];
        }
        x[row] = s / a[[row, row]];
    }
    Ok(x)
}

/// Ordinary least squares: minimize ||X beta - y||^2 via normal equations.
///
/// Returns the coefficient vector together with the per-coefficient standard
/// errors (classical OLS, homoscedastic residuals).
pub fn ols(x: &Array2<f64>, y: &Array1<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
    let n = x.nrows();
    let k = x.ncols();
    if y.len() != n {
        return Err(Error::Shape(format!("ols: {} rows vs {} targets", n, y.len())));
    }
    if n <= k {
        return Err(Error::TooShort { need: k + 1, have: n });
    }
    let xtx = x.t().dot(x);
    let xty = x.t().dot(y);
    let beta = solve(xtx.clone(), xty)
        .map_err(|_| Error::Singular("ols design matrix".into()))?;
    let resid = y - &x.dot(&beta);
    let sigma2 = resid.dot(&resid) / (n - k) as f64;
    // Diagonal of (X'X)^-1 by solving against unit vectors.
    let mut se = Array1::zeros(k);
    for j in 0..k {
        let mut e = Array1::zeros(k);
        e[j] = 1.0;
        let col = solve(xtx.clone(), e)
            .map_err(|_| Error::Singular("ols design matrix".into()))?;
        se[j] = (sigma2 * col[j]).max(0.0).sqrt();
    }
    Ok((beta, se))
}

/// Leading eigenpair of a symmetric PSD matrix by power iteration.
///
/// Returns (eigenvalue, unit eigenvector). The start vector is deterministic.
pub fn leading_eigenpair(m: &Array2<f64>, iters: usize) -> Result<(f64, Array1<f64>)> {
    let n = m.nrows();
    if m.ncols() != n || n == 0 {
        return Err(Error::Shape("leading_eigenpair expects square matrix".into()));
    }
    // Graded start so no fixed symmetric eigenvector can be exactly
    // orthogonal to it.
    let mut v = Array1::from_iter((0..n).map(|i| 1.0 + 1e-3 * i as f64));
    let norm0 = v.dot(&v).sqrt();
    v /= norm0;
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = m.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm < 1e-300 {
            return Err(Error::Singular("power iteration on zero matrix".into()));
        }
        v = w / norm;
        lambda = v.dot(&m.dot(&v));
    }
    Ok((lambda, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solve_hand_system() {
        // 2x + y = 5, x + 3y = 10 -> x = 1, y = 3
        let a = array![[2.0, 1.0], [1.0, 3.0]];
        let b = array![5.0, 10.0];
        let x = solve(a, b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn solve_singular_reports() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        let b = array![1.0, 2.0];
        assert!(matches!(solve(a, b), Err(Error::Singular(_))));
    }

    #[test]
    fn ols_recovers_exact_line() {
        // y = 2 + 3 x, no noise: residual zero, coefficients exact.
        let n = 20;
        let mut x = Array2::zeros((n, 2));
        let mut y = Array1::zeros(n);
        for i in 0..n {
            let xi = i as f64 * 0.1;
            x[[i, 0]] = 1.0;
            x[[i, 1]] = xi;
            y[i] = 2.0 + 3.0 * xi;
        }
        let (beta, se) = ols(&x, &y).unwrap();
        assert!((beta[0] - 2.0).abs() < 1e-10);
        assert!((beta[1] - 3.0).abs() < 1e-10);
        assert!(se[0] < 1e-8 && se[1] < 1e-8);
    }

    #[test]
    fn power_iteration_dominant_axis() {
        let m = array![[4.0, 0.0], [0.0, 1.0]];
        let (lambda, v) = leading_eigenpair(&m, 100).unwrap();
        assert!((lambda - 4.0).abs() < 1e-9);
        assert!(v[0].abs() > 0.999);
    }
}
