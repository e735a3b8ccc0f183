//! Deterministic locally linear embedding.
//!
//! The weight solve, the sparse weight scatter, the embedding matrix
//! `M = (I - W)ᵀ(I - W)` and the spectral embedding are shared by all three
//! methods; only the way the weights are produced differs.

use faer::Mat;
use nalgebra::{DMatrix, DVector};

use crate::manifold_data::Dataset;
use crate::error::{invalid, GlleError, Result};
use crate::linalg::large_sym_eigen;
use crate::neighborhood::{build_knn, gather_columns, NeighborhoodGraph};
use crate::par;
use crate::sparse::SparseMatrix;

/// Default Tikhonov factor for the local Gram matrices, relative to `tr(G)`.
pub const DEFAULT_REG: f64 = 1e-3;
/// Eigenvalues at or below this fraction of the largest one are null space.
/// The smallest genuine LLE eigenvalues fall like 1/n² and reach ~1e-11 of
/// the largest at n = 5000, while rounding leaves the null space near 1e-16.
pub const NULL_RCOND: f64 = 1e-14;
/// Smallest Cholesky pivot, squared and relative to the largest diagonal
/// entry, accepted by [`solve_weights`].
const SOLVE_RCOND: f64 = 1e-14;

/// Per-point reconstruction weights, one row per point in neighbor order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    /// `n × k`.
    pub rows: DMatrix<f64>,
    /// Whether every row is expected to sum to one.
    pub constrained: bool,
    /// Name of the dataset behind the neighborhood graph.
    pub graph: String,
}

impl WeightMatrix {
    pub fn row(&self, i: usize) -> DVector<f64> {
        self.rows.row(i).transpose()
    }
}

/// Low-dimensional coordinates, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// `n × p`, scaled so that `(1/n) YᵀY = I`.
    pub coords: DMatrix<f64>,
    /// Eigenvalues of the retained columns, ascending.
    pub eigenvalues: Vec<f64>,
    /// Number of eigenvalues treated as zero and skipped.
    pub null_dim: usize,
}

impl Embedding {
    pub fn n(&self) -> usize {
        self.coords.nrows()
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }
}

/// `Gᵢ = (x 1ᵀ - X)ᵀ (x 1ᵀ - X)` for a `d × k` neighbor matrix.
pub fn local_gram(x: &DVector<f64>, neighbors: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if neighbors.nrows() != x.len() {
        return invalid(format!(
            "point has dimension {} but neighbor matrix has {} rows",
            x.len(),
            neighbors.nrows()
        ));
    }
    let mut diff = -neighbors.clone();
    for mut col in diff.column_iter_mut() {
        col += x;
    }
    Ok(diff.transpose() * diff)
}

/// Minimizes `wᵀ(G + reg·tr(G)·I)w` subject to `1ᵀw = 1`.
pub fn solve_weights(gram: &DMatrix<f64>, reg: f64) -> Result<DVector<f64>> {
    let k = gram.nrows();
    if gram.ncols() != k || k == 0 {
        return invalid(format!("Gram matrix must be square and non-empty, got {:?}", gram.shape()));
    }
    if !(reg >= 0.0) {
        return invalid(format!("regularization must be non-negative, got {reg}"));
    }
    if k == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    let mut a = gram.clone();
    let shift = reg * gram.trace();
    for i in 0..k {
        a[(i, i)] += shift;
    }
    let singular = || {
        GlleError::SingularMatrix(format!(
            "regularized Gram matrix (reg = {reg:e}) is numerically singular; use a larger reg"
        ))
    };
    let max_diag = (0..k).map(|i| a[(i, i)]).fold(0.0, f64::max);
    let chol = a.clone().cholesky().ok_or_else(singular)?;
    let min_pivot = (0..k).map(|i| chol.l_dirty()[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(max_diag > 0.0) || min_pivot * min_pivot <= SOLVE_RCOND * max_diag {
        return Err(singular());
    }
    let z = chol.solve(&DVector::from_element(k, 1.0));
    let total = z.sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(singular());
    }
    Ok(z / total)
}

/// Row `i` holds the weights reconstructing point `i` from its neighbors.
pub fn reconstruct_all(ds: &Dataset, graph: &NeighborhoodGraph, reg: f64) -> Result<WeightMatrix> {
    if graph.n() != ds.n() {
        return invalid(format!(
            "graph has {} points but the dataset has {}",
            graph.n(),
            ds.n()
        ));
    }
    let k = graph.k();
    let rows = par::try_map_indices(ds.n(), |i| {
        let nb = gather_columns(&ds.points, graph.neighbors(i));
        let g = local_gram(&ds.point(i), &nb)?;
        solve_weights(&g, reg).map_err(|e| match e {
            GlleError::SingularMatrix(msg) => GlleError::SingularMatrix(format!("point {i}: {msg}")),
            other => other,
        })
    })?;
    let mut out = DMatrix::zeros(ds.n(), k);
    for (i, w) in rows.iter().enumerate() {
        out.row_mut(i).copy_from(&w.transpose());
    }
    Ok(WeightMatrix {
        rows: out,
        constrained: true,
        graph: graph.dataset.clone(),
    })
}

/// Spreads the `n × k` weights onto an `n × n` matrix at the neighbor columns.
pub fn scatter_weights(weights: &WeightMatrix, graph: &NeighborhoodGraph) -> Result<SparseMatrix> {
    let n = graph.n();
    if weights.rows.shape() != (n, graph.k()) {
        return invalid(format!(
            "weights are {:?} but the graph is {n} × {}",
            weights.rows.shape(),
            graph.k()
        ));
    }
    let rows = (0..n)
        .map(|i| {
            graph
                .neighbors(i)
                .iter()
                .zip(weights.rows.row(i).iter())
                .map(|(&j, &w)| (j, w))
                .collect()
        })
        .collect();
    SparseMatrix::from_rows(n, rows)
}

/// `M = (I - W)ᵀ(I - W)`, accumulated as a sum of row outer products.
pub fn embedding_matrix(scattered: &SparseMatrix) -> Result<SparseMatrix> {
    let n = scattered.n();
    // Row r of (I - W) contributes b_rᵀ b_r.
    let b_rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|r| {
            let mut row: Vec<(usize, f64)> = scattered.row(r).map(|(c, v)| (c, -v)).collect();
            match row.iter_mut().find(|(c, _)| *c == r) {
                Some(entry) => entry.1 += 1.0,
                None => row.push((r, 1.0)),
            }
            row.sort_by_key(|&(c, _)| c);
            row
        })
        .collect();
    let mut out: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for row in &b_rows {
        for &(i, vi) in row {
            for &(j, vj) in row {
                out[i].push((j, vi * vj));
            }
        }
    }
    SparseMatrix::from_rows(n, out)
}

/// Bottom eigenvectors of `M` after projecting out the constant direction.
///
/// The matrix is centered as `H M H` with `H = I - 11ᵀ/n`, which enforces
/// `Yᵀ1 = 0` even when the weight rows do not sum to one (stochastic weights).
/// For sum-to-one weights `H M H = M`. Eigenvalues at or below
/// `NULL_RCOND · λ_max` are skipped; the next `p` eigenvectors are scaled by
/// `√n` and sign-fixed so their largest-magnitude entry is positive.
pub fn embed(m: &SparseMatrix, p: usize) -> Result<Embedding> {
    let n = m.n();
    if n < 3 || p == 0 || p > n - 2 {
        return invalid(format!("need 1 <= p <= n - 2, got p = {p} with n = {n}"));
    }
    let eig = large_sym_eigen(&centered_dense(m));
    let largest = eig.values[n - 1];
    if !(largest > 0.0) {
        return invalid("embedding matrix has no positive eigenvalues");
    }
    let cutoff = NULL_RCOND * largest;
    let null_dim = eig.values.iter().take_while(|&&v| v <= cutoff).count();
    if null_dim + p > n {
        return invalid(format!(
            "p = {p} exceeds the {} eigenvectors left after a null space of dimension {null_dim}",
            n - null_dim
        ));
    }
    let scale = (n as f64).sqrt();
    let mut coords = DMatrix::zeros(n, p);
    for c in 0..p {
        // Eigenvalues close to the null space pick up a rounding-level share
        // of the constant vector; remove it and re-orthonormalize.
        let mut v = eig.vector(null_dim + c);
        v.add_scalar_mut(-v.mean());
        for prev in 0..c {
            let q = coords.column(prev) / scale;
            let overlap = q.dot(&v);
            v -= q * overlap;
        }
        let mut v = v.normalize() * scale;
        let pivot = v.iter().copied().fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            v = -v;
        }
        coords.set_column(c, &v);
    }
    Ok(Embedding {
        coords,
        eigenvalues: eig.values[null_dim..null_dim + p].to_vec(),
        null_dim,
    })
}

fn centered_dense(m: &SparseMatrix) -> Mat<f64> {
    let n = m.n();
    let nf = n as f64;
    let row_means: Vec<f64> = m.row_sums().iter().map(|s| s / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    let mut out = Mat::<f64>::from_fn(n, n, |i, j| grand - row_means[i] - row_means[j]);
    for i in 0..n {
        for (j, v) in m.row(i) {
            out.write(i, j, out.read(i, j) + v);
        }
    }
    // Exact symmetry keeps the eigensolver's lower-triangle read harmless.
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (out.read(i, j) + out.read(j, i));
            out.write(i, j, avg);
            out.write(j, i, avg);
        }
    }
    out
}

/// Result of a full deterministic LLE run.
#[derive(Debug, Clone)]
pub struct LleOutput {
    pub embedding: Embedding,
    pub weights: WeightMatrix,
    pub graph: NeighborhoodGraph,
}

/// Embeds a weight matrix over a graph: scatter, form `M`, solve.
pub fn embed_weights(weights: &WeightMatrix, graph: &NeighborhoodGraph, p: usize) -> Result<Embedding> {
    let scattered = scatter_weights(weights, graph)?;
    embed(&embedding_matrix(&scattered)?, p)
}

/// Writes `y0,...,y{p-1},param`.
pub fn save_embedding_csv(emb: &Embedding, param: &[f64], path: impl AsRef<std::path::Path>) -> Result<()> {
    if param.len() != emb.n() {
        return invalid(format!("{} params for {} embedded points", param.len(), emb.n()));
    }
    let header: Vec<String> = (0..emb.dim())
        .map(|j| format!("y{j}"))
        .chain(std::iter::once("param".to_string()))
        .collect();
    crate::manifold_data::write_table(path, &header, &emb.coords, param)
}

pub fn lle_pipeline(ds: &Dataset, k: usize, p: usize, reg: f64) -> Result<LleOutput> {
    let graph = build_knn(ds, k)?;
    lle_on_graph(ds, graph, p, reg)
}

pub fn lle_on_graph(ds: &Dataset, graph: NeighborhoodGraph, p: usize, reg: f64) -> Result<LleOutput> {
    let weights = reconstruct_all(ds, &graph, reg)?;
    let embedding = embed_weights(&weights, &graph, p)?;
    Ok(LleOutput {
        embedding,
        weights,
        graph,
    })
}
