//! Small dense linear solves for the exact tabular-MDP operations.

use crate::error::{Error, Result};

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
/// `a` is row-major n x n and is consumed. Intended for the tiny systems
/// (tens of unknowns) arising from tabular policy evaluation.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n || a.iter().any(|row| row.len() != n) {
        return Err(Error::ShapeMismatch(format!(
            "linear system: matrix {}x{:?} vs rhs {}",
            a.len(),
            a.first().map(|r| r.len()),
            n
        )));
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::InvalidConfig("singular linear system".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Maximum absolute residual component of `a x - b`.
pub fn residual(a: &[Vec<f64>], x: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(row, &bi)| {
            let ax: f64 = row.iter().zip(x).map(|(&aij, &xj)| aij * xj).sum();
            (ax - bi).abs()
        })
        .fold(0.0, f64::max)
}
