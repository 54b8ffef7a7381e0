//! Dense linear solves for the small systems the trainers need
//! (normal equations up to a few hundred unknowns).

use crate::error::{Error, Result};

/// Solve `A x = b` in place by Gaussian elimination with partial pivoting.
/// `a` is row-major `n x n`. Returns `Err` when a pivot falls below
/// `rank_tol`, signalling a (numerically) rank-deficient system.
pub fn solve(a: &mut [f64], b: &mut [f64], n: usize, rank_tol: f64) -> Result<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    for col in 0..n {
        // pivot row: largest magnitude at or below the diagonal
        let mut pivot = col;
        let mut best = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best <= rank_tol {
            return Err(Error::data(format!(
                "rank-deficient system: pivot {best:.3e} at column {col}"
            )));
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[row * n + j] -= factor * a[col * n + j];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for j in col + 1..n {
            acc -= a[col * n + j] * x[j];
        }
        x[col] = acc / a[col * n + col];
    }
    Ok(x)
}

/// Least squares `min ||X w - y||` via the normal equations, with an
/// optional ridge term on the diagonal. `x` is row-major `n x d`.
pub fn least_squares(x: &[f64], y: &[f64], n: usize, d: usize, ridge: f64) -> Result<Vec<f64>> {
    assert_eq!(x.len(), n * d);
    assert_eq!(y.len(), n);
    let mut xtx = vec![0.0; d * d];
    let mut xty = vec![0.0; d];
    for row in 0..n {
        let r = &x[row * d..(row + 1) * d];
        for i in 0..d {
            xty[i] += r[i] * y[row];
            for j in i..d {
                xtx[i * d + j] += r[i] * r[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            xtx[i * d + j] = xtx[j * d + i];
        }
        xtx[i * d + i] += ridge;
    }
    solve(&mut xtx, &mut xty, d, 1e-12)
}
