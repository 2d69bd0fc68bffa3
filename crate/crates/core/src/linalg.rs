//! Small dense complex linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Kronecker product of two vectors, index `i * b.len() + j`.
pub fn kron_vec(a: &CVector, b: &CVector) -> CVector {
    let nb = b.len();
    CVector::from_fn(a.len() * nb, |k, _| a[k / nb] * b[k % nb])
}

/// Kronecker product of two matrices with the same row-major block convention as [`kron_vec`].
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (br, bc) = b.shape();
    CMatrix::from_fn(a.nrows() * br, a.ncols() * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

/// Projects onto the Hermitian matrices: `(X + X^H) / 2`.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// `max |X - X^H| / max |X|`, zero for the zero matrix.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let scale = max_abs(m);
    if scale == 0.0 {
        return 0.0;
    }
    max_abs(&(m - m.adjoint())) / scale
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Eigenpairs are ordered by decreasing eigenvalue magnitude. Fourth-order
/// cumulants of constant-modulus sources are negative, so the signal part of
/// an FCM sits at the most negative end of the spectrum; ordering by
/// magnitude puts it first regardless of sign.
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

pub fn hermitian_eigen(m: &CMatrix) -> HermitianEigen {
    assert!(m.is_square(), "eigendecomposition needs a square matrix");
    let n = m.nrows();
    if n == 0 {
        return HermitianEigen {
            values: Vec::new(),
            vectors: CMatrix::zeros(0, 0),
        };
    }
    let eig = SymmetricEigen::new(hermitize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .total_cmp(&eig.eigenvalues[a].abs())
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    HermitianEigen { values, vectors }
}

/// Number of eigenvalues with magnitude above `rel_tol * max |λ|`.
pub fn numerical_rank(m: &CMatrix, rel_tol: f64) -> usize {
    let eig = hermitian_eigen(m);
    rank_of_spectrum(&eig.values, rel_tol)
}

pub fn rank_of_spectrum(values: &[f64], rel_tol: f64) -> usize {
    let top = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    values.iter().filter(|v| v.abs() > rel_tol * top).count()
}

/// Relative Frobenius distance `‖a - b‖ / max(‖a‖, ‖b‖)`; zero when both vanish.
pub fn relative_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}
