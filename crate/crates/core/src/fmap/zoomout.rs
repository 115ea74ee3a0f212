use faer::Mat;

use super::{nearest_rows, FmapError, FunctionalMap, PointToPointMap};
use crate::mesh::SpectralBasis;

/// Point map induced by `C`: target vertex `y` goes to the source vertex
/// whose spectral embedding row is closest to row `y` of `Φ_tgt C`.
pub fn pointwise_from_fmap(map: &FunctionalMap, src: &SpectralBasis, tgt: &SpectralBasis) -> Result<PointToPointMap, FmapError> {
    let (k2, k1) = (map.k_target(), map.k_source());
    check_size(k1, src)?;
    check_size(k2, tgt)?;
    let embedded = tgt.leading(k2) * map.matrix();
    Ok(PointToPointMap { assignment: nearest_rows(src.leading(k1), embedded.as_ref()) })
}

/// `C = Φ_tgtᵀ M_tgt Π Φ_src` at size `k × k`, the mass-weighted least-squares
/// fit to the point map `Π`.
pub fn fmap_from_pointwise(p2p: &PointToPointMap, src: &SpectralBasis, tgt: &SpectralBasis, k: usize) -> Result<Mat<f64>, FmapError> {
    check_size(k, src)?;
    check_size(k, tgt)?;
    if p2p.len() != tgt.vertex_count() {
        return Err(FmapError::DimensionMismatch(format!(
            "point map covers {} vertices, target has {}",
            p2p.len(),
            tgt.vertex_count()
        )));
    }
    let phi_s = src.eigenfunctions();
    let mass = tgt.mass();
    let pulled = Mat::from_fn(tgt.vertex_count(), k, |y, j| mass[y] * phi_s[(p2p.assignment[y], j)]);
    Ok(tgt.leading(k).transpose() * &pulled)
}

/// `Σ_y m_y ‖Φ_src[T(y)] − (Φ_tgt C)[y]‖²`, the quantity both ZoomOut
/// half-steps minimize at a fixed basis size.
pub fn assignment_cost(map: &FunctionalMap, p2p: &PointToPointMap, src: &SpectralBasis, tgt: &SpectralBasis) -> f64 {
    let (k2, k1) = (map.k_target(), map.k_source());
    let embedded = tgt.leading(k2) * map.matrix();
    let phi_s = src.leading(k1);
    let mass = tgt.mass();
    (0..tgt.vertex_count())
        .map(|y| {
            let x = p2p.assignment[y];
            mass[y] * (0..k1).map(|j| (phi_s[(x, j)] - embedded[(y, j)]).powi(2)).sum::<f64>()
        })
        .sum()
}

/// One ZoomOut iteration: point map from `map`, then a `k_next × k_next`
/// map fitted to it.
pub fn zoomout_step(
    map: &FunctionalMap,
    src: &SpectralBasis,
    tgt: &SpectralBasis,
    k_next: usize,
) -> Result<(FunctionalMap, PointToPointMap), FmapError> {
    let p2p = pointwise_from_fmap(map, src, tgt)?;
    let c = fmap_from_pointwise(&p2p, src, tgt, k_next)?;
    let next = FunctionalMap { c, source_id: map.source_id.clone(), target_id: map.target_id.clone(), k_init: map.k_init, k_final: k_next };
    Ok((next, p2p))
}

/// Spectral upsampling from `k_start` to `k_end` in increments of `step`.
/// Returns the final `k_end × k_end` map and the point map it induces.
pub fn zoomout_refine(
    map: &FunctionalMap,
    src: &SpectralBasis,
    tgt: &SpectralBasis,
    k_start: usize,
    k_end: usize,
    step: usize,
) -> Result<(FunctionalMap, PointToPointMap), FmapError> {
    if k_start > map.k_source() || k_start > map.k_target() || k_start == 0 {
        return Err(FmapError::DimensionMismatch(format!(
            "k_start {k_start} exceeds the {}×{} map",
            map.k_target(),
            map.k_source()
        )));
    }
    if k_end < k_start {
        return Err(FmapError::DimensionMismatch(format!("k_end {k_end} below k_start {k_start}")));
    }
    check_size(k_end, src)?;
    check_size(k_end, tgt)?;
    let step = step.max(1);
    let mut current = map.truncated(k_start);
    let mut k = k_start;
    while k < k_end {
        k = (k + step).min(k_end);
        current = zoomout_step(&current, src, tgt, k)?.0;
    }
    current.k_init = k_start;
    current.k_final = k_end;
    let p2p = pointwise_from_fmap(&current, src, tgt)?;
    Ok((current, p2p))
}

fn check_size(k: usize, basis: &SpectralBasis) -> Result<(), FmapError> {
    if k > basis.k() {
        Err(FmapError::BasisTooSmall { requested: k, available: basis.k() })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::spectral_basis;
    use crate::shapes;

    fn basis(k: usize) -> SpectralBasis {
        let mesh = shapes::bottle(&shapes::BottleParams::default(), 24, 18);
        spectral_basis(&mesh, k).unwrap().area_normalized()
    }

    #[test]
    fn identity_self_map() {
        let b = basis(40);
        let map = FunctionalMap::identity(20, "a", "a");
        let (refined, p2p) = zoomout_refine(&map, &b, &b, 20, 40, 5).unwrap();
        assert_eq!(refined.k_source(), 40);
        assert_eq!(refined.k_init, 20);
        assert_eq!(refined.k_final, 40);
        assert!(p2p.identity_fraction() >= 0.99);
    }

    #[test]
    fn basis_too_small() {
        let b = basis(20);
        let map = FunctionalMap::identity(10, "a", "a");
        assert!(matches!(zoomout_refine(&map, &b, &b, 10, 30, 5), Err(FmapError::BasisTooSmall { requested: 30, available: 20 })));
    }

    #[test]
    fn fit_of_identity_point_map_is_identity() {
        let b = basis(15);
        let p2p = PointToPointMap { assignment: (0..b.vertex_count()).collect() };
        let c = fmap_from_pointwise(&p2p, &b, &b, 15).unwrap();
        for i in 0..15 {
            for j in 0..15 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((c[(i, j)] - want).abs() < 1e-9);
            }
        }
    }
}
