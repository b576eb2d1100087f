//! Small dense linear algebra on `nalgebra` matrices.
//!
//! Everything here targets the handful of 1x1 to 4x4 matrices that appear in
//! the model definitions, so clarity wins over asymptotic cost: the Lyapunov
//! equation is solved through its Kronecker-vectorized form.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// The 2x2 rotation generator `[[0, 1], [-1, 0]]`.
pub fn rotation_generator() -> Matrix {
    Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Matrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn eigenvalues(a: &Matrix) -> Vec<Complex<f64>> {
    a.complex_eigenvalues().iter().copied().collect()
}

/// Rejects `a` unless every eigenvalue has a strictly positive real part.
pub fn ensure_positive_stable(a: &Matrix) -> Result<()> {
    ensure_square("matrix", a)?;
    for ev in eigenvalues(a) {
        if !(ev.re > 0.0) {
            return Err(Error::UnstableMatrix { re: ev.re, im: ev.im });
        }
    }
    Ok(())
}

pub(crate) fn ensure_square(what: &'static str, a: &Matrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::dimension(
            what,
            "square matrix",
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    Ok(())
}

/// Solves `A X + X A^T = Q` for `X`.
///
/// Column-major vectorization turns the equation into
/// `(I ⊗ A + A ⊗ I) vec(X) = vec(Q)`, which is solved by LU. The operator is
/// nonsingular whenever no two eigenvalues of `A` sum to zero; this is
/// guaranteed for positive-stable `A`, which is checked first.
pub fn solve_lyapunov(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    ensure_positive_stable(a)?;
    let n = a.nrows();
    if q.shape() != (n, n) {
        return Err(Error::dimension(
            "Lyapunov right-hand side",
            format!("{n}x{n}"),
            format!("{}x{}", q.nrows(), q.ncols()),
        ));
    }
    let eye = Matrix::identity(n, n);
    let op = kron(&eye, a) + kron(a, &eye);
    let rhs = nalgebra::DVector::from_column_slice(q.as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("Lyapunov operator".into()))?;
    let x = Matrix::from_column_slice(n, n, sol.as_slice());
    Ok(symmetrize(&x))
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Principal square root of a symmetric positive semi-definite matrix.
///
/// Eigenvalues down to `-tol * max(1, |λ_max|)` are treated as rounding noise
/// and clamped to zero; anything more negative is rejected.
pub fn psd_sqrt(m: &Matrix, tol: f64) -> Result<Matrix> {
    ensure_square("PSD matrix", m)?;
    let eig = symmetrize(m).symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -tol * scale {
            return Err(Error::IndefiniteDiffusion { eigenvalue: *v });
        }
        *v = v.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    Ok(q * Matrix::from_diagonal(&roots) * q.transpose())
}

/// Ratio of the largest to the smallest singular value (infinite if singular).
pub fn condition_number(m: &Matrix) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    let min = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eigenvalue(m: &Matrix) -> f64 {
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

pub fn to_row_major(m: &Matrix) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Matrix {
    Matrix::from_row_slice(rows, cols, data)
}

/// `out = m * v` with `m` stored row-major as `rows x v.len()`.
#[inline]
pub(crate) fn mat_vec(m: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &m[i * cols..(i + 1) * cols];
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

pub fn frobenius(m: &Matrix) -> f64 {
    m.norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_of_identities_is_identity() {
        let i2 = Matrix::identity(2, 2);
        let i3 = Matrix::identity(3, 3);
        assert_eq!(kron(&i2, &i3), Matrix::identity(6, 6));
    }

    #[test]
    fn identity_lyapunov_case() {
        // A = I, Q = 2I  =>  X = I
        let a = Matrix::identity(2, 2);
        let q = Matrix::identity(2, 2) * 2.0;
        let x = solve_lyapunov(&a, &q).unwrap();
        assert!((x - Matrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn unstable_matrix_names_eigenvalue() {
        let a = Matrix::from_row_slice(2, 2, &[-0.5, 0.0, 0.0, 1.0]);
        let err = solve_lyapunov(&a, &Matrix::identity(2, 2)).unwrap_err();
        match err {
            Error::UnstableMatrix { re, .. } => assert_eq!(re, -0.5),
            other => panic!("unexpected error {other}"),
        }
        assert!(err_string(&a).contains("-0.5"));
    }

    fn err_string(a: &Matrix) -> String {
        ensure_positive_stable(a).unwrap_err().to_string()
    }

    #[test]
    fn psd_sqrt_handles_zero_eigenvalues() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let s = psd_sqrt(&m, 1e-12).unwrap();
        assert!((&s * &s - &m).norm() < 1e-12);
        assert!((&s - s.transpose()).norm() < 1e-14);
    }

    #[test]
    fn psd_sqrt_rejects_indefinite() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]);
        assert!(matches!(
            psd_sqrt(&m, 1e-12),
            Err(Error::IndefiniteDiffusion { .. })
        ));
    }

    #[test]
    fn condition_of_singular_matrix_is_infinite() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(condition_number(&m) > 1e15);
        assert_eq!(condition_number(&Matrix::identity(3, 3)), 1.0);
    }

    #[test]
    fn row_major_round_trip() {
        let m = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let v = to_row_major(&m);
        assert_eq!(v, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(from_row_major(2, 3, &v), m);
    }
}
