use nalgebra::{Cholesky, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::Matrix;

/// Symmetry tolerance for matrices handed to [`laplacian`].
pub const LAPLACIAN_SYMMETRY_TOL: f64 = 1e-10;

/// `L = D - Φ` with `D(i,i) = Σ_j Φ(i,j)`. `Φ` may be signed.
pub fn laplacian(phi: &Matrix) -> Result<Matrix> {
    let n = phi.nrows();
    if phi.ncols() != n {
        return invalid(format!("laplacian of non-square {:?} matrix", phi.shape()));
    }
    for i in 0..n {
        for j in 0..i {
            if (phi[(i, j)] - phi[(j, i)]).abs() > LAPLACIAN_SYMMETRY_TOL {
                return invalid(format!("laplacian input not symmetric at ({i}, {j})"));
            }
        }
    }
    let mut l = -phi.clone();
    for i in 0..n {
        l[(i, i)] += phi.row(i).sum();
    }
    Ok(l)
}

/// Ridge regression `W = (AᵀA + γI)⁻¹ AᵀY`.
///
/// Solved by Cholesky; if the factorization fails the symmetric
/// eigendecomposition is used instead, and a numerically singular system is
/// reported as [`Error::Singular`].
pub fn ridge_solve(a: &Matrix, y: &Matrix, gamma: f64) -> Result<Matrix> {
    if a.nrows() != y.nrows() {
        return invalid(format!(
            "ridge design has {} rows, targets have {}",
            a.nrows(),
            y.nrows()
        ));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return invalid(format!("ridge penalty must be finite and non-negative, got {gamma}"));
    }
    let k = a.ncols();
    let mut gram = a.transpose() * a;
    for i in 0..k {
        gram[(i, i)] += gamma;
    }
    let rhs = a.transpose() * y;
    spd_solve(gram, &rhs)
}

/// Solves `M X = rhs` for symmetric positive (semi)definite `M`.
pub(crate) fn spd_solve(m: Matrix, rhs: &Matrix) -> Result<Matrix> {
    if let Some(chol) = Cholesky::new(m.clone()) {
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d * d), hi.max(d * d)));
        if lo > hi * 1e-12 {
            return Ok(chol.solve(rhs));
        }
    }
    let eig = SymmetricEigen::new(m);
    let max = eig.eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let floor = max * 1e-12 * eig.eigenvalues.len() as f64;
    if max == 0.0 || eig.eigenvalues.iter().any(|&v| v <= floor) {
        return Err(Error::Singular(format!(
            "smallest eigenvalue {:.3e} relative to largest {:.3e}",
            eig.eigenvalues.min(),
            max
        )));
    }
    let q = &eig.eigenvectors;
    let mut scaled = q.transpose() * rhs;
    for (i, lambda) in eig.eigenvalues.iter().enumerate() {
        scaled.row_mut(i).scale_mut(1.0 / lambda);
    }
    Ok(q * scaled)
}

/// Right division `N M⁻¹` for symmetric positive definite `M`.
pub(crate) fn spd_right_solve(n: &Matrix, m: Matrix) -> Result<Matrix> {
    Ok(spd_solve(m, &n.transpose())?.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_examples() {
        let phi = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(
            laplacian(&phi).unwrap(),
            Matrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])
        );
        assert_eq!(laplacian(&Matrix::zeros(3, 3)).unwrap(), Matrix::zeros(3, 3));
        let signed = Matrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert_eq!(
            laplacian(&signed).unwrap(),
            Matrix::from_row_slice(2, 2, &[-0.5, 0.5, 0.5, -0.5])
        );
        let asym = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        assert!(laplacian(&asym).is_err());
    }

    #[test]
    fn ridge_examples() {
        let w = ridge_solve(
            &Matrix::identity(2, 2),
            &Matrix::from_column_slice(2, 1, &[1.0, 0.0]),
            1.0,
        )
        .unwrap();
        assert!((w - Matrix::from_column_slice(2, 1, &[0.5, 0.0])).abs().max() < 1e-15);

        let a = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let y = Matrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let w = ridge_solve(&a, &y, 0.0).unwrap();
        let exact = a.clone().try_inverse().unwrap() * &y;
        assert!((w - exact).abs().max() < 1e-12);

        let w = ridge_solve(&a, &Matrix::zeros(2, 3), 0.5).unwrap();
        assert_eq!(w, Matrix::zeros(2, 3));
    }

    #[test]
    fn ridge_singular_without_penalty() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let y = Matrix::from_row_slice(2, 1, &[1.0, 2.0]);
        assert!(matches!(ridge_solve(&a, &y, 0.0), Err(Error::Singular(_))));
        assert!(ridge_solve(&a, &y, 1e-3).is_ok());
    }

    proptest::proptest! {
        #[test]
        fn laplacian_rows_sum_to_zero(seed in 0u64..500, n in 1usize..8) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut phi = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..=i {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    phi[(i, j)] = v;
                    phi[(j, i)] = v;
                }
            }
            let l = laplacian(&phi).unwrap();
            for i in 0..n {
                proptest::prop_assert!(l.row(i).sum().abs() <= 1e-10);
            }
        }
    }
}
