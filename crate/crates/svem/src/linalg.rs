//! Small dense linear-algebra kernels shared by the learners and the
//! reduced-rank distance calculation: Cholesky factorization and a cyclic
//! Jacobi eigensolver for symmetric matrices. Problem sizes here are at most
//! a few hundred, so simple O(n^3) routines are plenty.

use ndarray::Array2;

/// In-place lower Cholesky factorization. On success the lower triangle of
/// `a` holds L with `a = L L'`; the strict upper triangle is left untouched.
/// Returns the failing pivot column when the matrix is not positive definite.
pub(crate) fn cholesky_in_place(a: &mut Array2<f64>) -> Result<(), usize> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= a[[j, k]] * a[[j, k]];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(j);
        }
        let dj = d.sqrt();
        a[[j, j]] = dj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = s / dj;
        }
    }
    Ok(())
}

/// Solves L x = b for lower-triangular L.
pub(crate) fn solve_lower(l: &Array2<f64>, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[[i, k]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Solves L' x = b for lower-triangular L.
pub(crate) fn solve_lower_transpose(l: &Array2<f64>, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Solves (L L') x = b given the Cholesky factor L.
pub(crate) fn cholesky_solve(l: &Array2<f64>, b: &[f64]) -> Vec<f64> {
    let y = solve_lower(l, b);
    solve_lower_transpose(l, &y)
}

/// Eigendecomposition of a symmetric matrix, eigenvalues in descending order
/// with matching eigenvector columns.
pub(crate) struct SymEigen {
    pub values: Vec<f64>,
    /// n x n matrix whose column j is the eigenvector for `values[j]`.
    pub vectors: Array2<f64>,
}

/// Cyclic Jacobi rotations. Converges to machine precision for the symmetric
/// positive semidefinite Gram matrices used here.
pub(crate) fn jacobi_eigen_sym(a: &Array2<f64>) -> SymEigen {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    if n <= 1 {
        return SymEigen {
            values: (0..n).map(|i| m[[i, i]]).collect(),
            vectors: v,
        };
    }

    let frob: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-15 * frob.max(f64::MIN_POSITIVE);
    const MAX_SWEEPS: usize = 100;

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[[p, q]].abs();
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                // tan of the rotation angle, smaller root for stability
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[[j, j]]
            .partial_cmp(&m[[i, i]])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values: Vec<f64> = order.iter().map(|&i| m[[i, i]]).collect();
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (new_j, &old_j) in order.iter().enumerate() {
        for i in 0..n {
            vectors[[i, new_j]] = v[[i, old_j]];
        }
    }
    SymEigen { values, vectors }
}
