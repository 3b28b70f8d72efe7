//! Continuous Lyapunov equation `A W + W A^T + Q = 0`.
//!
//! General matrices go through a real Schur decomposition `A = U T U^T`
//! followed by block back-substitution on the quasi-triangular factor
//! (Bartels-Stewart). Diagonal `A` takes the closed form
//! `w_ij = -q_ij / (a_ii + a_jj)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::statespace::is_stable;

/// Solves `A W + W A^T + Q = 0` for stable `A` and symmetric `Q`.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!("A is {}x{}, expected square", n, a.ncols())));
    }
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::Dimension(format!("Q is {}x{}, expected {n}x{n}", q.nrows(), q.ncols())));
    }
    let asym = (q - q.transpose()).amax();
    if asym > 1e-10 * q.amax().max(f64::MIN_POSITIVE) {
        return Err(Error::Value(format!("Q is not symmetric (max asymmetry {asym:e})")));
    }
    if !is_stable(a)? {
        return Err(Error::Unstable("Lyapunov equation needs a stable A".into()));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let w = if is_diagonal(a) {
        DMatrix::from_fn(n, n, |i, j| -q[(i, j)] / (a[(i, i)] + a[(j, j)]))
    } else {
        schur_solve(a, q)?
    };
    Ok(symmetrize(w))
}

fn is_diagonal(a: &DMatrix<f64>) -> bool {
    a.iter().enumerate().all(|(k, v)| {
        let (i, j) = (k % a.nrows(), k / a.nrows());
        i == j || *v == 0.0
    })
}

pub(crate) fn symmetrize(w: DMatrix<f64>) -> DMatrix<f64> {
    (&w + w.transpose()) * 0.5
}

fn schur_solve(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let schur = crate::statespace::real_schur(a)?;
    let (u, t) = schur.unpack();
    let f = -(u.transpose() * q * &u);
    let y = solve_quasi_triangular(&t, &f)?;
    Ok(&u * y * u.transpose())
}

/// Diagonal blocks `(start, size)` of a real quasi-upper-triangular matrix.
fn diagonal_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

/// Solves `T Y + Y T^T = F` with `T` quasi-upper-triangular.
fn solve_quasi_triangular(t: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    let blocks = diagonal_blocks(t);
    let mut y = DMatrix::<f64>::zeros(n, n);

    for &(ri, pi) in blocks.iter().rev() {
        let end_i = ri + pi;
        for &(cj, pj) in blocks.iter().rev() {
            let end_j = cj + pj;
            // Right-hand side with already-solved blocks moved over.
            let mut rhs = [0.0f64; 4];
            for r in 0..pi {
                for c in 0..pj {
                    let (row, col) = (ri + r, cj + c);
                    let mut s = f[(row, col)];
                    for k in end_i..n {
                        s -= t[(row, k)] * y[(k, col)];
                    }
                    for l in end_j..n {
                        s -= y[(row, l)] * t[(col, l)];
                    }
                    rhs[r + pi * c] = s;
                }
            }
            // Small Sylvester system T_ii Y + Y T_jj^T = rhs via its Kronecker form.
            let size = pi * pj;
            let mut k = DMatrix::<f64>::zeros(size, size);
            for r in 0..pi {
                for c in 0..pj {
                    let row = r + pi * c;
                    for rr in 0..pi {
                        k[(row, rr + pi * c)] += t[(ri + r, ri + rr)];
                    }
                    for cc in 0..pj {
                        k[(row, r + pi * cc)] += t[(cj + c, cj + cc)];
                    }
                }
            }
            let sol = k
                .lu()
                .solve(&nalgebra::DVector::from_column_slice(&rhs[..size]))
                .ok_or_else(|| Error::Unstable("A and -A share an eigenvalue".into()))?;
            for r in 0..pi {
                for c in 0..pj {
                    y[(ri + r, cj + c)] = sol[r + pi * c];
                }
            }
        }
    }
    Ok(y)
}

/// Scaled residual `||A W + W A^T + Q|| / (||A|| ||W|| + ||Q||)` in the Frobenius norm.
pub fn lyapunov_residual(a: &DMatrix<f64>, w: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    let r = a * w + w * a.transpose() + q;
    let scale = a.norm() * w.norm() + q.norm();
    if scale == 0.0 {
        r.norm()
    } else {
        r.norm() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn scalar_equation() {
        let w = solve_lyapunov(&dmatrix![-1.0], &dmatrix![1.0]).unwrap();
        assert_relative_eq!(w[(0, 0)], 0.5);
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let a = dmatrix![-1.0, 2.0; -0.5, -3.0];
        let w = solve_lyapunov(&a, &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(w.amax(), 0.0);
    }

    #[test]
    fn diagonal_closed_form() {
        let a = dmatrix![-1.0, 0.0; 0.0, -2.0];
        let q = dmatrix![2.0, 3.0; 3.0, 4.0];
        let w = solve_lyapunov(&a, &q).unwrap();
        assert_relative_eq!(w, dmatrix![1.0, 1.0; 1.0, 1.0], epsilon = 1e-15);
    }

    #[test]
    fn schur_path_matches_diagonal_path() {
        // Same spectrum as the diagonal example, reached through a similarity.
        let p = dmatrix![1.0, 0.3; -0.2, 1.0];
        let pinv = p.clone().try_inverse().unwrap();
        let a = &p * dmatrix![-1.0, 0.0; 0.0, -2.0] * &pinv;
        let q = dmatrix![1.0, 0.2; 0.2, 3.0];
        let w = solve_lyapunov(&a, &q).unwrap();
        assert!(lyapunov_residual(&a, &w, &q) < 1e-14);
    }

    #[test]
    fn complex_pair_block() {
        let a = dmatrix![-0.5, 4.0, 0.0; -4.0, -0.5, 1.0; 0.0, 0.0, -2.0];
        let q = dmatrix![1.0, 0.0, 0.5; 0.0, 2.0, 0.0; 0.5, 0.0, 1.0];
        let w = solve_lyapunov(&a, &q).unwrap();
        assert!(lyapunov_residual(&a, &w, &q) < 1e-14);
        assert!(w.clone().symmetric_eigenvalues().iter().all(|&l| l > 0.0));
    }

    #[test]
    fn rejects_unstable_and_asymmetric() {
        assert!(matches!(solve_lyapunov(&dmatrix![1.0], &dmatrix![1.0]), Err(Error::Unstable(_))));
        assert!(matches!(
            solve_lyapunov(&dmatrix![-1.0, 0.0; 0.0, -1.0], &dmatrix![1.0, 2.0; 0.0, 1.0]),
            Err(Error::Value(_))
        ));
        assert!(matches!(
            solve_lyapunov(&dmatrix![-1.0], &DMatrix::zeros(2, 2)),
            Err(Error::Dimension(_))
        ));
    }
}
