//! Dense linear-algebra helpers: bordered saddle solves and 2-norm condition
//! estimates via power / inverse-power iteration on the LU factors.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Estimate the 2-norm condition number of a square matrix.
///
/// sigma_max by power iteration on A^T A, sigma_min by inverse iteration
/// using LU factors of A and A^T. Order-of-magnitude accurate, which is all
/// the resonance detectors and degeneracy gates need.
pub fn cond_estimate(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let at = a.transpose();

    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.7 * ((i * 2654435761) % 97) as f64 / 97.0);
    v /= v.norm();
    let mut sigma_max = 0.0;
    for _ in 0..30 {
        let w = &at * (a * &v);
        let nw = w.norm();
        if nw == 0.0 {
            return f64::INFINITY;
        }
        sigma_max = nw.sqrt();
        v = w / nw;
    }

    let lu = a.clone().lu();
    let lut = at.lu();
    let mut u = DVector::from_fn(n, |i, _| 1.0 - 0.5 * ((i * 40503) % 89) as f64 / 89.0);
    u /= u.norm();
    let mut inv_sq = 0.0;
    for _ in 0..30 {
        let w1 = match lut.solve(&u) {
            Some(w) => w,
            None => return f64::INFINITY,
        };
        let w2 = match lu.solve(&w1) {
            Some(w) => w,
            None => return f64::INFINITY,
        };
        let nw = w2.norm();
        if !nw.is_finite() || nw == 0.0 {
            return f64::INFINITY;
        }
        inv_sq = nw;
        u = w2 / nw;
    }
    let sigma_min = 1.0 / inv_sq.sqrt();
    sigma_max / sigma_min
}

/// Number of negative eigenvalues of a symmetric matrix (its inertia),
/// used to bisect eigenvalue crossings robustly.
pub fn negative_eigenvalue_count(a: &DMatrix<f64>) -> usize {
    let eig = a.clone().symmetric_eigen();
    eig.eigenvalues.iter().filter(|&&l| l < 0.0).count()
}

/// Solution of the bordered saddle system
///   [ A  C ] [x ]   [ rhs ]
///   [ C^T 0 ] [mu] = [  0  ]
/// used for constrained linear solves (gauge rows, kernel deflation).
pub struct BorderedSolve {
    pub x: DVector<f64>,
    pub multipliers: DVector<f64>,
    pub cond: f64,
}

pub fn solve_bordered(
    a: &DMatrix<f64>,
    constraints: &[DVector<f64>],
    rhs: &DVector<f64>,
) -> Result<BorderedSolve> {
    let n = a.nrows();
    let m = constraints.len();
    let dim = n + m;
    let mut big = DMatrix::zeros(dim, dim);
    big.view_mut((0, 0), (n, n)).copy_from(a);
    for (i, c) in constraints.iter().enumerate() {
        assert_eq!(c.len(), n);
        for j in 0..n {
            big[(j, n + i)] = c[j];
            big[(n + i, j)] = c[j];
        }
    }
    let cond = cond_estimate(&big);
    let mut b = DVector::zeros(dim);
    b.rows_mut(0, n).copy_from(rhs);
    let sol = big
        .lu()
        .solve(&b)
        .ok_or(Error::SingularJacobian { cond })?;
    Ok(BorderedSolve {
        x: sol.rows(0, n).into_owned(),
        multipliers: sol.rows(n, m).into_owned(),
        cond,
    })
}

/// Gram-Schmidt with drop tolerance; returns an orthonormal spanning set.
pub fn orthonormalize(vectors: &[DVector<f64>], drop_tol: f64) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        let scale = v.norm();
        if scale == 0.0 {
            continue;
        }
        for b in &basis {
            let p = b.dot(&w);
            w -= b * p;
        }
        // one re-orthogonalization pass for numerical safety
        for b in &basis {
            let p = b.dot(&w);
            w -= b * p;
        }
        if w.norm() > drop_tol * scale {
            let nw = w.norm();
            basis.push(w / nw);
        }
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cond_of_diagonal_matrix() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 10.0, 1000.0]));
        let c = cond_estimate(&a);
        assert!((c / 1000.0 - 1.0).abs() < 1e-6, "cond = {c}");
    }

    #[test]
    fn bordered_solve_enforces_constraint() {
        // A = I with a null direction replaced: x + mu*c = rhs, c^T x = 0
        let a = DMatrix::identity(4, 4);
        let c = DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0]);
        let rhs = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let s = solve_bordered(&a, &[c.clone()], &rhs).unwrap();
        assert!(c.dot(&s.x).abs() < 1e-12);
        // x = rhs - mu*c with mu = mean(rhs)
        assert!((s.multipliers[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn orthonormalize_drops_dependent() {
        let v1 = DVector::from_vec(vec![1.0, 0.0]);
        let v2 = DVector::from_vec(vec![2.0, 0.0]);
        let v3 = DVector::from_vec(vec![1.0, 1.0]);
        let b = orthonormalize(&[v1, v2, v3], 1e-10);
        assert_eq!(b.len(), 2);
    }
}
