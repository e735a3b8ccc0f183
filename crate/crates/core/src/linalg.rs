//! Small dense helpers shared by the Gaussian, LLE and EM code.

use faer::dyn_stack::{GlobalPodBuffer, PodStack};
use faer::linalg::evd;
use faer::{Mat, Parallelism};
use nalgebra::{DMatrix, DVector};

/// Relative spectral cutoff used for pseudo-inverses.
pub const PINV_RCOND: f64 = 1e-10;

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
/// Column `j` of the returned matrix pairs with eigenvalue `j`.
pub fn sym_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let eig = symmetrized(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix. Eigenvalues with
/// magnitude at or below `PINV_RCOND * max|λ|` are treated as zero.
pub fn pinv_sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    pinv_sym_with_rank(a).0
}

/// Pseudo-inverse together with the numerical rank it used.
pub fn pinv_sym_with_rank(a: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let n = a.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), 0);
    }
    let (vals, vecs) = sym_eigen(a);
    let largest = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cutoff = PINV_RCOND * largest;
    let mut out = DMatrix::zeros(n, n);
    let mut rank = 0;
    for (j, &lambda) in vals.iter().enumerate() {
        if largest > 0.0 && lambda.abs() > cutoff {
            let v = vecs.column(j);
            out += (v * v.transpose()) / lambda;
            rank += 1;
        }
    }
    (symmetrized(&out), rank)
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrized(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Largest absolute asymmetry relative to the largest absolute entry.
pub fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).amax() / scale
}

/// Eigenpairs of a large dense symmetric matrix, eigenvalues ascending.
pub struct LargeSymEigen {
    pub values: Vec<f64>,
    vectors: Mat<f64>,
    order: Vec<usize>,
}

impl LargeSymEigen {
    /// Unit eigenvector paired with `values[j]`.
    pub fn vector(&self, j: usize) -> DVector<f64> {
        let src = self.order[j];
        DVector::from_fn(self.vectors.nrows(), |r, _| self.vectors.read(r, src))
    }
}

/// Full eigendecomposition of a dense symmetric matrix (lower triangle read).
///
/// Runs single-threaded so the bits of the result do not depend on the size
/// of any thread pool.
pub fn large_sym_eigen(a: &Mat<f64>) -> LargeSymEigen {
    let n = a.nrows();
    let mut s = Mat::<f64>::zeros(n, 1);
    let mut u = Mat::<f64>::zeros(n, n);
    let params = Default::default();
    let req = evd::compute_hermitian_evd_req::<f64>(
        n,
        evd::ComputeVectors::Yes,
        Parallelism::None,
        params,
    )
    .expect("eigensolver workspace size overflow");
    let mut buf = GlobalPodBuffer::new(req);
    evd::compute_hermitian_evd(
        a.as_ref(),
        s.as_mut().col_mut(0),
        Some(u.as_mut()),
        Parallelism::None,
        PodStack::new(&mut buf),
        params,
    );
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s.read(i, 0).total_cmp(&s.read(j, 0)).then(i.cmp(&j)));
    let values = order.iter().map(|&i| s.read(i, 0)).collect();
    LargeSymEigen {
        values,
        vectors: u,
        order,
    }
}
