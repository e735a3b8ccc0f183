//! Prints the low end of the LLE spectrum and the preservation obtained
//! with two null-space cutoffs.

use glle::lle::{embedding_matrix, reconstruct_all, scatter_weights};
use glle::manifold_data::{s_curve, swiss_roll};
use glle::metrics::preservation_between;
use glle::neighborhood::build_knn;
use nalgebra::DMatrix;

fn main() {
    for n in [1000, 5000] {
        for ds in [swiss_roll(n, false, 0).unwrap(), s_curve(n, 0).unwrap()] {
            let g = build_knn(&ds, 10).unwrap();
            let w = reconstruct_all(&ds, &g, 1e-3).unwrap();
            let m = embedding_matrix(&scatter_weights(&w, &g).unwrap()).unwrap();
            let dense = faer::Mat::from_fn(n, n, |i, j| m.get(i, j));
            let e = glle::linalg::large_sym_eigen(&dense);
            let max = e.values[n - 1];
            for rcond in [1e-8, 1e-12] {
                let skip = e.values.iter().take_while(|&&v| v <= rcond * max).count();
                let y = DMatrix::from_fn(n, 2, |i, c| e.vector(skip + c)[i]);
                let p = preservation_between(&ds.points, &y, 10).unwrap();
                println!("{} n={n} rcond={rcond:e} skip={skip} preservation={p:.3}", ds.name);
            }
        }
    }
}
