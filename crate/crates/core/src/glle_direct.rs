//! Stochastic linear reconstruction by direct sampling.
//!
//! Deterministic LLE supplies the embedding `Y` and the weights `w^LLE`.
//! Each point then gets a covariance `Γᵢ = (XᵢᵀXᵢ + YᵢᵀYᵢ)⁻¹` built from its
//! neighbors in both spaces, and weights are drawn from `N(w^LLE, a·Γᵢ)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, GlleError, Result};
use crate::gaussian::{sample_psd, GaussianParams};
use crate::glle_em::point_rng;
use crate::linalg::symmetrized;
use crate::lle::{lle_pipeline, LleOutput, WeightMatrix, DEFAULT_REG};
use crate::manifold_data::Dataset;
use crate::neighborhood::gather_columns;
use crate::par;

/// Default Tikhonov factor for `Γᵢ`, relative to the trace.
pub const DEFAULT_GAMMA_REG: f64 = 1e-6;

/// Where the sampling distribution is centered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DirectMean {
    /// The LLE weights.
    #[default]
    Lle,
    /// The unconstrained conditional mean `Γᵢ(Xᵢᵀxᵢ + Yᵢᵀyᵢ)`.
    Conditional,
}

#[derive(Debug, Clone)]
pub struct DirectParams {
    pub gamma: Vec<DMatrix<f64>>,
    /// `n × k`.
    pub w_lle: DMatrix<f64>,
    /// `n × k`.
    pub exact_means: DMatrix<f64>,
    graph: String,
}

/// `(XᵀX + YᵀY + reg·tr(XᵀX + YᵀY)·I)⁻¹`.
pub fn gamma(x: &DMatrix<f64>, y: &DMatrix<f64>, reg: f64) -> Result<DMatrix<f64>> {
    if x.ncols() != y.ncols() {
        return invalid(format!("X has {} columns, Y has {}", x.ncols(), y.ncols()));
    }
    if !(reg >= 0.0) || !reg.is_finite() {
        return invalid(format!("reg must be finite and non-negative, got {reg}"));
    }
    let k = x.ncols();
    let mut a = x.transpose() * x + y.transpose() * y;
    let shift = reg * a.trace();
    for j in 0..k {
        a[(j, j)] += shift;
    }
    let a = symmetrized(&a);
    let chol = a.clone().cholesky().ok_or_else(|| {
        GlleError::SingularMatrix(format!("XᵀX + YᵀY is not positive definite with reg {reg}"))
    })?;
    let diag_max = a.diagonal().amax();
    let pivot_min = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if pivot_min * pivot_min <= 1e-14 * diag_max {
        return Err(GlleError::SingularMatrix(format!(
            "XᵀX + YᵀY is numerically singular with reg {reg}"
        )));
    }
    Ok(symmetrized(&chol.inverse()))
}

/// `Γ(Xᵀx + Yᵀy)`.
pub fn conditional_mean(
    x_nb: &DMatrix<f64>,
    y_nb: &DMatrix<f64>,
    x: &DVector<f64>,
    y: &DVector<f64>,
    gamma: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let k = x_nb.ncols();
    if x_nb.nrows() != x.len() || y_nb.nrows() != y.len() || y_nb.ncols() != k || gamma.shape() != (k, k) {
        return invalid(format!(
            "conditional_mean shapes: X {:?}, Y {:?}, x {}, y {}, Γ {:?}",
            x_nb.shape(),
            y_nb.shape(),
            x.len(),
            y.len(),
            gamma.shape()
        ));
    }
    Ok(gamma * (x_nb.transpose() * x + y_nb.transpose() * y))
}

/// Computes `Γᵢ` and both candidate means from a finished LLE run.
pub fn direct_params(ds: &Dataset, lle: &LleOutput, reg: f64) -> Result<DirectParams> {
    let n = ds.n();
    let k = lle.graph.k();
    let y_all = &lle.embedding.coords;
    if y_all.nrows() != n || lle.graph.n() != n {
        return invalid("LLE output does not match the dataset");
    }
    let per_point = par::try_map_indices(n, |i| {
        let idx = lle.graph.neighbors(i);
        let xn = gather_columns(&ds.points, idx);
        let yn = gather_columns(y_all, idx);
        let g = gamma(&xn, &yn, reg).map_err(|e| match e {
            GlleError::SingularMatrix(m) => GlleError::SingularMatrix(format!("point {i}: {m}")),
            other => other,
        })?;
        let m = conditional_mean(&xn, &yn, &ds.point(i), &y_all.row(i).transpose(), &g)?;
        Ok::<_, GlleError>((g, m))
    })?;
    let mut exact_means = DMatrix::zeros(n, k);
    let mut gammas = Vec::with_capacity(n);
    for (i, (g, m)) in per_point.into_iter().enumerate() {
        exact_means.row_mut(i).copy_from(&m.transpose());
        gammas.push(g);
    }
    Ok(DirectParams {
        gamma: gammas,
        w_lle: lle.weights.rows.clone(),
        exact_means,
        graph: lle.weights.graph.clone(),
    })
}

/// Draws one weight row per point from `N(mean, scale · Γᵢ)`.
pub fn sample_direct(params: &DirectParams, scale: f64, seed: u64, center: DirectMean) -> Result<WeightMatrix> {
    if !(scale >= 0.0) || !scale.is_finite() {
        return invalid(format!("scale must be finite and non-negative, got {scale}"));
    }
    let means = match center {
        DirectMean::Lle => &params.w_lle,
        DirectMean::Conditional => &params.exact_means,
    };
    let (n, k) = means.shape();
    let rows = par::try_map_indices(n, |i| {
        let g = GaussianParams::new(means.row(i).transpose(), &params.gamma[i] * scale)?;
        sample_psd(&g, &mut point_rng(seed, i, 0))
    })?;
    let mut out = DMatrix::zeros(n, k);
    for (i, w) in rows.iter().enumerate() {
        out.row_mut(i).copy_from(&w.transpose());
    }
    Ok(WeightMatrix {
        rows: out,
        constrained: false,
        graph: params.graph.clone(),
    })
}

/// Runs LLE with the default weight regularization, then samples around the
/// LLE weights. `reg` applies to `Γᵢ`.
pub fn run_direct(
    ds: &Dataset,
    k: usize,
    p: usize,
    seed: u64,
    scale: f64,
    reg: f64,
) -> Result<(WeightMatrix, DirectParams)> {
    if !(scale > 0.0) {
        return invalid(format!("scale must be positive, got {scale}"));
    }
    let lle = lle_pipeline(ds, k, p, DEFAULT_REG)?;
    let params = direct_params(ds, &lle, reg)?;
    let weights = sample_direct(&params, scale, seed, DirectMean::Lle)?;
    Ok((weights, params))
}
