//! Exact k-nearest-neighbor graph under Euclidean distance.

use nalgebra::DMatrix;

use crate::manifold_data::Dataset;
use crate::error::{invalid, Result};
use crate::par;

/// Row `i` lists the `k` nearest other points of `i`, nearest first, ties
/// broken by smaller index.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodGraph {
    k: usize,
    indices: Vec<usize>,
    /// Name of the dataset the graph was built from.
    pub dataset: String,
}

impl NeighborhoodGraph {
    /// Wraps precomputed neighbor lists (`n` rows of `k`).
    pub fn from_rows(rows: Vec<Vec<usize>>, dataset: impl Into<String>) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        let n = rows.len();
        let mut indices = Vec::with_capacity(n * k);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return invalid(format!("row {i} has {} neighbors, expected {k}", row.len()));
            }
            for (a, &j) in row.iter().enumerate() {
                if j >= n || j == i || row[..a].contains(&j) {
                    return invalid(format!("row {i} has an invalid neighbor {j}"));
                }
            }
            indices.extend_from_slice(row);
        }
        Ok(Self {
            k,
            indices,
            dataset: dataset.into(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.indices.len() / self.k
        }
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[usize]> {
        self.indices.chunks(self.k)
    }
}

fn squared_distance(points: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    (0..points.ncols())
        .map(|c| {
            let diff = points[(i, c)] - points[(j, c)];
            diff * diff
        })
        .sum()
}

/// Neighbor lists for the rows of an `n × d` matrix.
pub fn knn_rows(points: &DMatrix<f64>, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = points.nrows();
    if k == 0 {
        return invalid("k must be at least 1");
    }
    if k >= n {
        return invalid(format!("k = {k} must be smaller than n = {n}"));
    }
    Ok(par::map_indices(n, |i| {
        let mut cand: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (squared_distance(points, i, j), j))
            .collect();
        let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        cand.select_nth_unstable_by(k - 1, by_dist);
        cand.truncate(k);
        cand.sort_by(by_dist);
        cand.into_iter().map(|(_, j)| j).collect()
    }))
}

/// Exhaustive kNN over all pairs.
pub fn build_knn(ds: &Dataset, k: usize) -> Result<NeighborhoodGraph> {
    let rows = knn_rows(&ds.points, k)?;
    NeighborhoodGraph::from_rows(rows, ds.name.clone())
}

/// `d × k` matrix whose column `j` is the `j`-th neighbor of point `i`.
pub fn neighbor_matrix(graph: &NeighborhoodGraph, ds: &Dataset, i: usize) -> Result<DMatrix<f64>> {
    if i >= graph.n() || graph.n() != ds.n() {
        return invalid(format!(
            "point {i} out of range for a graph of {} points over {} data points",
            graph.n(),
            ds.n()
        ));
    }
    Ok(gather_columns(&ds.points, graph.neighbors(i)))
}

/// Stacks the listed rows of `points` as columns.
pub(crate) fn gather_columns(points: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(points.ncols(), idx.len(), |r, c| points[(idx[c], r)])
}

/// Debug dump: one row per point, `k` index columns.
pub fn save_graph_csv(graph: &NeighborhoodGraph, path: impl AsRef<std::path::Path>) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header: Vec<String> = (0..graph.k()).map(|j| format!("n{j}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for row in graph.rows() {
        let line: Vec<String> = row.iter().map(usize::to_string).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}
