//! Embedding quality scores.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::lle::Embedding;
use crate::manifold_data::Dataset;
use crate::neighborhood::knn_rows;

/// Mean fraction of each point's `k` input-space neighbors that are also
/// among its `k` embedded neighbors.
pub fn neighborhood_preservation(ds: &Dataset, emb: &Embedding, k: usize) -> Result<f64> {
    preservation_between(&ds.points, &emb.coords, k)
}

/// [`neighborhood_preservation`] on raw `n × d` and `n × p` matrices.
pub fn preservation_between(a: &DMatrix<f64>, b: &DMatrix<f64>, k: usize) -> Result<f64> {
    let n = a.nrows();
    if b.nrows() != n {
        return invalid(format!("{n} input points but {} embedded points", b.nrows()));
    }
    if k == 0 || k >= n {
        return invalid(format!("k must satisfy 1 <= k < n = {n}, got {k}"));
    }
    let na = knn_rows(a, k)?;
    let nb = knn_rows(b, k)?;
    let shared: usize = na
        .iter()
        .zip(&nb)
        .map(|(ra, rb)| ra.iter().filter(|j| rb.contains(j)).count())
        .sum();
    Ok(shared as f64 / (n * k) as f64)
}

/// `min_Q ‖A - BQ‖_F / ‖A‖_F` over orthogonal `Q`, reflections included.
pub fn procrustes_residual(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return invalid(format!("shapes differ: {:?} vs {:?}", a.shape(), b.shape()));
    }
    let norm_a = a.norm();
    if norm_a == 0.0 {
        return invalid("reference configuration is all zeros");
    }
    let svd = (b.transpose() * a).svd(true, true);
    let q = svd.u.as_ref().unwrap() * svd.v_t.as_ref().unwrap();
    Ok((a - b * q).norm() / norm_a)
}

/// One line of a metrics table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: String,
    pub seed: u64,
    pub scale: f64,
    pub preservation: f64,
    /// `None` when no LLE reference was computed.
    pub procrustes_vs_lle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// Preservation of the deterministic LLE reference.
    pub neighborhood_preservation: f64,
    /// Largest residual of any generation against the reference.
    pub procrustes_residual: f64,
    pub per_generation: Vec<(u64, f64)>,
}

/// Writes `method,seed,scale,preservation,procrustes_vs_lle`.
pub fn save_metrics_csv(rows: &[MetricsRow], path: impl AsRef<std::path::Path>) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "method,seed,scale,preservation,procrustes_vs_lle")?;
    for r in rows {
        let residual = r.procrustes_vs_lle.map(|v| format!("{v:.16e}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{:.16e},{}",
            r.method, r.seed, r.scale, r.preservation, residual
        )?;
    }
    out.flush()?;
    Ok(())
}
