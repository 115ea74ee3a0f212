use std::cmp::Ordering;

use faer::{Mat, MatRef};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_fmap_coupled, DescriptorOperators, FmapError, FmapParams, FunctionalMap, MapWeights};
use crate::mesh::SpectralBasis;

/// `w_ik = exp(−(i−k)² / 2σ²)` with `σ = k/20`, scaled to a maximum of 1.
pub fn gaussian_weights(rows: usize, cols: usize) -> Mat<f64> {
    let sigma = (rows.max(cols) as f64 / 20.0).max(f64::MIN_POSITIVE);
    let w = Mat::from_fn(rows, cols, |i, k| (-((i as f64 - k as f64).powi(2)) / (2.0 * sigma * sigma)).exp());
    let max = (0..rows).flat_map(|i| (0..cols).map(move |k| (i, k))).map(|(i, k)| w[(i, k)]).fold(0.0, f64::max);
    if max > 0.0 {
        Mat::from_fn(rows, cols, |i, k| w[(i, k)] / max)
    } else {
        w
    }
}

/// Diagonal-dominance measure of a map.
///
/// `literal` is `Σ(1−w)|c| − Σ w|c|` over `|C|` scaled by its largest entry;
/// it is lowest for the most diagonal maps. `score` is its negation, so a
/// larger score means a more diagonally dominant map and selection takes
/// the maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub score: f64,
    pub literal: f64,
}

pub fn matching_score(c: MatRef<'_, f64>, w: MatRef<'_, f64>) -> Result<MatchScore, FmapError> {
    if c.nrows() != w.nrows() || c.ncols() != w.ncols() {
        return Err(FmapError::DimensionMismatch(format!(
            "map is {}×{}, weights are {}×{}",
            c.nrows(),
            c.ncols(),
            w.nrows(),
            w.ncols()
        )));
    }
    let max = (0..c.nrows()).flat_map(|i| (0..c.ncols()).map(move |k| (i, k))).map(|(i, k)| c[(i, k)].abs()).fold(0.0, f64::max);
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    let mut literal = 0.0;
    for i in 0..c.nrows() {
        for k in 0..c.ncols() {
            let a = c[(i, k)].abs() * scale;
            let wk = w[(i, k)];
            literal += (1.0 - wk) * a - wk * a;
        }
    }
    Ok(MatchScore { score: -literal, literal })
}

/// A shape's basis with the spectral coefficients of its descriptors and
/// their multiplication operators at `k_init`.
#[derive(Debug, Clone, Copy)]
pub struct MatchCandidate<'a> {
    pub basis: &'a SpectralBasis,
    pub coeffs: MatRef<'a, f64>,
    pub operators: &'a DescriptorOperators,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub index: usize,
    pub map: FunctionalMap,
    /// Per scene object, in scene order.
    pub scores: Vec<MatchScore>,
    pub residuals: Vec<f64>,
}

/// Computes a `k_init` map from `sel` to every scene object and picks the
/// highest score of its orthogonalized version; ties go to the lower residual `‖CF − H‖`, then to the
/// lower index.
pub fn select_match(sel: &MatchCandidate<'_>, scene: &[MatchCandidate<'_>], params: &FmapParams) -> Result<Selection, FmapError> {
    if scene.is_empty() {
        return Err(FmapError::EmptyScene);
    }
    let k = params.k_init;
    if sel.coeffs.nrows() < k {
        return Err(FmapError::BasisTooSmall { requested: k, available: sel.coeffs.nrows() });
    }
    let f = sel.coeffs.subrows(0, k);
    let results: Vec<Result<(FunctionalMap, MatchScore, f64), FmapError>> = scene
        .par_iter()
        .map(|cand| {
            if cand.coeffs.nrows() < k {
                return Err(FmapError::BasisTooSmall { requested: k, available: cand.coeffs.nrows() });
            }
            let h = cand.coeffs.subrows(0, k);
            let map = solve_fmap_coupled(sel.basis, f, sel.operators, cand.basis, h, cand.operators, &MapWeights::from(params))?;
            let w = gaussian_weights(k, k);
            // score the nearest orthogonal map: the raw least-squares map
            // carries noise of arbitrary size in weakly constrained rows
            let score = matching_score(map.orthogonalized()?.matrix(), w.as_ref())?;
            let residual = map.residual(f, h);
            Ok((map, score, residual))
        })
        .collect();
    let mut entries = Vec::with_capacity(scene.len());
    for r in results {
        entries.push(r?);
    }
    let mut best = 0;
    for j in 1..entries.len() {
        let (_, s, r) = &entries[j];
        let (_, bs, br) = &entries[best];
        let better = match s.score.partial_cmp(&bs.score) {
            Some(Ordering::Greater) => true,
            Some(Ordering::Equal) => r < br,
            _ => false,
        };
        if better {
            best = j;
        }
    }
    let scores = entries.iter().map(|e| e.1).collect();
    let residuals = entries.iter().map(|e| e.2).collect();
    let map = entries.swap_remove(best).0;
    Ok(Selection { index: best, map, scores, residuals })
}
