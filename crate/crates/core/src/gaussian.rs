//! Multivariate Gaussian utilities: density, block conditioning, and sampling
//! from positive semi-definite (possibly singular) covariances.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, GlleError, Result};
use crate::linalg::{pinv_sym, relative_asymmetry, sym_eigen, symmetrized};

/// Allowed relative asymmetry of a covariance matrix.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Smallest eigenvalue, relative to the largest, for a covariance to count as
/// positive definite in [`log_pdf`].
pub const PD_RCOND: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianParams {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let m = mean.len();
        if cov.shape() != (m, m) {
            return invalid(format!(
                "covariance is {:?} but mean has length {m}",
                cov.shape()
            ));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `log N(x; μ, Σ)`. Requires Σ strictly positive definite.
pub fn log_pdf(x: &DVector<f64>, g: &GaussianParams) -> Result<f64> {
    let m = g.dim();
    if x.len() != m {
        return invalid(format!("point has length {}, expected {m}", x.len()));
    }
    let (vals, vecs) = sym_eigen(&g.cov);
    let largest = vals[m - 1];
    if !(largest > 0.0) || vals[0] <= PD_RCOND * largest {
        return Err(GlleError::SingularMatrix(format!(
            "covariance is not positive definite (eigenvalues {:.3e} .. {:.3e})",
            vals[0], largest
        )));
    }
    let centered = vecs.transpose() * (x - &g.mean);
    let quad: f64 = centered.iter().zip(vals.iter()).map(|(c, l)| c * c / l).sum();
    let log_det: f64 = vals.iter().map(|l| l.ln()).sum();
    Ok(-0.5 * (m as f64 * (2.0 * PI).ln() + log_det + quad))
}

/// Distribution of the second block given the first block equals `observed`.
///
/// Uses a spectral pseudo-inverse of Σ₁₁, so singular observation blocks are
/// allowed. The returned covariance is exactly symmetric.
pub fn condition(
    joint: &GaussianParams,
    first_len: usize,
    observed: &DVector<f64>,
) -> Result<GaussianParams> {
    let m = joint.dim();
    if first_len > m || observed.len() != first_len {
        return invalid(format!(
            "cannot observe {} values as the first {first_len} of {m} coordinates",
            observed.len()
        ));
    }
    let m2 = m - first_len;
    let s11 = joint.cov.view((0, 0), (first_len, first_len)).into_owned();
    let s12 = joint.cov.view((0, first_len), (first_len, m2));
    let s21 = joint.cov.view((first_len, 0), (m2, first_len));
    let s22 = joint.cov.view((first_len, first_len), (m2, m2));
    let mu1 = joint.mean.rows(0, first_len);
    let mu2 = joint.mean.rows(first_len, m2);

    let gain = s21 * pinv_sym(&s11);
    let mean = mu2 + &gain * (observed - mu1);
    let cov = symmetrized(&(s22 - &gain * s12));
    GaussianParams::new(mean, cov)
}

/// Draws `μ + E √D z` where `E D Eᵀ` is the eigendecomposition of Σ with
/// eigenvalues below rounding level clipped to zero.
pub fn sample_psd<R: Rng + ?Sized>(g: &GaussianParams, rng: &mut R) -> Result<DVector<f64>> {
    let m = g.dim();
    if relative_asymmetry(&g.cov) > SYMMETRY_TOL {
        return invalid("covariance is not symmetric");
    }
    let z: DVector<f64> = DVector::from_fn(m, |_, _| rng.sample(StandardNormal));
    if g.cov.iter().all(|&v| v == 0.0) {
        return Ok(g.mean.clone());
    }
    let (vals, vecs) = sym_eigen(&g.cov);
    // Eigenvalues within rounding of zero, of either sign, carry no variance.
    let noise = f64::EPSILON * m as f64 * vals.amax();
    let scaled = DVector::from_fn(m, |i, _| if vals[i] > noise { vals[i].sqrt() * z[i] } else { 0.0 });
    Ok(&g.mean + vecs * scaled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn standard_normal_at_mode() {
        let g = GaussianParams::new(DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
        let v = log_pdf(&DVector::zeros(1), &g).unwrap();
        assert!((v - (-0.918_938_533_204_672_7)).abs() < 1e-12);
    }

    #[test]
    fn log_pdf_at_mean() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let g = GaussianParams::new(DVector::from_vec(vec![1.0, -1.0]), cov.clone()).unwrap();
        let v = log_pdf(&g.mean, &g).unwrap();
        let expected = -0.5 * (2.0 * (2.0 * PI).ln() + cov.determinant().ln());
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn log_pdf_rejects_singular() {
        let g = GaussianParams::new(DVector::zeros(2), DMatrix::from_element(2, 2, 1.0)).unwrap();
        assert!(matches!(
            log_pdf(&DVector::zeros(2), &g),
            Err(GlleError::SingularMatrix(_))
        ));
    }

    #[test]
    fn bivariate_textbook_conditioning() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let g = GaussianParams::new(DVector::zeros(2), cov).unwrap();
        let c = condition(&g, 1, &DVector::from_vec(vec![2.0])).unwrap();
        assert!((c.mean[0] - 1.0).abs() < 1e-14);
        assert!((c.cov[(0, 0)] - 0.75).abs() < 1e-14);
    }

    #[test]
    fn independent_blocks_give_marginal() {
        let mut cov = DMatrix::zeros(3, 3);
        cov[(0, 0)] = 2.0;
        cov[(1, 1)] = 3.0;
        cov[(2, 2)] = 4.0;
        cov[(1, 2)] = 0.5;
        cov[(2, 1)] = 0.5;
        let mean = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let g = GaussianParams::new(mean, cov.clone()).unwrap();
        let c = condition(&g, 1, &DVector::from_vec(vec![-7.0])).unwrap();
        assert_eq!(c.mean.as_slice(), &[2.0, 3.0]);
        assert_eq!(c.cov, cov.view((1, 1), (2, 2)).into_owned());
    }

    #[test]
    fn condition_rejects_bad_split() {
        let g = GaussianParams::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        assert!(condition(&g, 3, &DVector::zeros(3)).is_err());
        assert!(condition(&g, 1, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn zero_cov_returns_mean() {
        let mean = DVector::from_vec(vec![0.5, -2.0, 3.0]);
        let g = GaussianParams::new(mean.clone(), DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(sample_psd(&g, &mut rng(1)).unwrap(), mean);
    }

    #[test]
    fn rank_one_support() {
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let mean = DVector::from_vec(vec![3.0, 1.0, -1.0]);
        let g = GaussianParams::new(mean.clone(), &v * v.transpose()).unwrap();
        let unit = v.normalize();
        let mut r = rng(2);
        for _ in 0..200 {
            let s = sample_psd(&g, &mut r).unwrap();
            let off = &s - &mean;
            let perp = &off - &unit * unit.dot(&off);
            assert!(perp.norm() < 1e-10);
        }
    }

    #[test]
    fn identity_moments() {
        let mean = DVector::from_vec(vec![1.0, -1.0, 0.5]);
        let g = GaussianParams::new(mean.clone(), DMatrix::identity(3, 3)).unwrap();
        let mut r = rng(3);
        let n = 100_000;
        let samples: Vec<DVector<f64>> = (0..n).map(|_| sample_psd(&g, &mut r).unwrap()).collect();
        let avg = samples.iter().fold(DVector::zeros(3), |a, s| a + s) / n as f64;
        let cov = samples
            .iter()
            .fold(DMatrix::zeros(3, 3), |a, s| a + (s - &avg) * (s - &avg).transpose())
            / (n as f64 - 1.0);
        assert!((&avg - &mean).amax() < 0.02);
        assert!((cov - DMatrix::identity(3, 3)).amax() < 0.05);
    }

    #[test]
    fn sampling_is_reproducible() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let g = GaussianParams::new(DVector::zeros(2), cov).unwrap();
        let a = sample_psd(&g, &mut rng(9)).unwrap();
        let b = sample_psd(&g, &mut rng(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn asymmetric_cov_rejected() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.1, 1.0]);
        let g = GaussianParams::new(DVector::zeros(2), cov).unwrap();
        assert!(matches!(sample_psd(&g, &mut rng(0)), Err(GlleError::InvalidArgument(_))));
    }
}
