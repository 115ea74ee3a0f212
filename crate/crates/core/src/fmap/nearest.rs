use faer::{Mat, MatRef};
use kdtree::distance::squared_euclidean;
use kdtree::KdTree;
use rayon::prelude::*;

/// Point sets up to this size are searched exhaustively.
pub const BRUTE_FORCE_LIMIT: usize = 20_000;

const CHUNK: usize = 256;

/// For every row of `queries`, the index of the nearest row of `points`
/// (Euclidean). Exact in both regimes; ties go to the lower index in the
/// exhaustive search.
pub fn nearest_rows(points: MatRef<'_, f64>, queries: MatRef<'_, f64>) -> Vec<usize> {
    assert_eq!(points.ncols(), queries.ncols());
    if points.nrows() <= BRUTE_FORCE_LIMIT {
        brute_force(points, queries)
    } else {
        kd_search(points, queries)
    }
}

fn brute_force(points: MatRef<'_, f64>, queries: MatRef<'_, f64>) -> Vec<usize> {
    let n = points.nrows();
    let norms: Vec<f64> = (0..n).map(|i| (0..points.ncols()).map(|j| points[(i, j)].powi(2)).sum()).collect();
    let pt = points.transpose().to_owned();
    let starts: Vec<usize> = (0..queries.nrows()).step_by(CHUNK).collect();
    let chunks: Vec<Vec<usize>> = starts
        .par_iter()
        .map(|&s| {
            let rows = CHUNK.min(queries.nrows() - s);
            let q = queries.subrows(s, rows);
            // ‖p − q‖² = ‖p‖² − 2 p·q + const(q)
            let dots: Mat<f64> = q * &pt;
            (0..rows)
                .map(|r| {
                    let mut best = 0;
                    let mut best_d = f64::INFINITY;
                    for i in 0..n {
                        let d = norms[i] - 2.0 * dots[(r, i)];
                        if d < best_d {
                            best_d = d;
                            best = i;
                        }
                    }
                    best
                })
                .collect()
        })
        .collect();
    chunks.into_iter().flatten().collect()
}

fn kd_search(points: MatRef<'_, f64>, queries: MatRef<'_, f64>) -> Vec<usize> {
    let dim = points.ncols();
    let mut tree = KdTree::with_capacity(dim, 32);
    for i in 0..points.nrows() {
        let p: Vec<f64> = (0..dim).map(|j| points[(i, j)]).collect();
        tree.add(p, i).expect("finite spectral embedding");
    }
    (0..queries.nrows())
        .into_par_iter()
        .map(|r| {
            let q: Vec<f64> = (0..dim).map(|j| queries[(r, j)]).collect();
            let found = tree.nearest(&q, 1, &squared_euclidean).expect("finite query");
            *found[0].1
        })
        .collect()
}
