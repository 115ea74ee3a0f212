use std::sync::OnceLock;

use faer::Mat;
use proptest::prelude::*;
use skill_transfer::descriptors::{project, wks, WksParams};
use skill_transfer::fmap::{
    assignment_cost, gaussian_weights, matching_score, pointwise_from_fmap, solve_fmap, zoomout_step, FunctionKind, FunctionTransfer,
    FunctionalMap, SurfaceFunction,
};
use skill_transfer::mesh::{spectral_basis, SpectralBasis};
use skill_transfer::pipeline::{match_operation, prepare_shape, PipelineConfig, PreparedShape};
use skill_transfer::shapes::{self, BottleParams};

struct Pair {
    src: PreparedShape,
    tgt: PreparedShape,
    map: FunctionalMap,
}

fn pair() -> &'static Pair {
    static PAIR: OnceLock<Pair> = OnceLock::new();
    PAIR.get_or_init(|| {
        let mut config = PipelineConfig::default();
        config.fmap.k_init = 20;
        config.fmap.k_final = 40;
        let a = shapes::bottle(&BottleParams::default(), 24, 18).with_id("a");
        let b = shapes::bottle(&BottleParams { body_radius: 0.04, ..BottleParams::default() }, 24, 18).with_id("b");
        let src = prepare_shape(&a, &config).unwrap().0;
        let tgt = prepare_shape(&b, &config).unwrap().0;
        let map = match_operation(&src, std::slice::from_ref(&tgt), &config, &mut Vec::new()).unwrap().map;
        Pair { src, tgt, map }
    })
}

fn small_basis() -> &'static SpectralBasis {
    static B: OnceLock<SpectralBasis> = OnceLock::new();
    B.get_or_init(|| spectral_basis(&shapes::bottle(&BottleParams::default(), 16, 12), 25).unwrap().area_normalized())
}

/// WKS alone is rank deficient on a rotation-symmetric bottle (it only sees
/// |φ|²), so a few smooth coordinate functions are appended.
fn rich_descriptors(basis: &SpectralBasis) -> Mat<f64> {
    let d = wks(basis, &WksParams { num_energies: 60, ..WksParams::default() }).unwrap();
    let phi = basis.eigenfunctions();
    let (n, w) = (basis.vertex_count(), d.values.ncols());
    Mat::from_fn(n, w + basis.k(), |i, j| if j < w { d.values[(i, j)] } else { phi[(i, j - w)] })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn transfer_is_linear(a in -3.0..3.0f64, b in -3.0..3.0f64, seed in any::<u64>()) {
        let p = pair();
        let n = p.src.mesh.vertex_count();
        let f: Vec<f64> = (0..n).map(|i| ((i as u64 ^ seed) % 97) as f64 / 97.0).collect();
        let h: Vec<f64> = (0..n).map(|i| ((i as u64).wrapping_mul(seed | 1) % 89) as f64 / 89.0).collect();
        let t = FunctionTransfer::new(&p.map, &p.src.basis, &p.tgt.basis).unwrap();
        let mix: Vec<f64> = f.iter().zip(&h).map(|(x, y)| a * x + b * y).collect();
        let lhs = t.apply_raw(&mix).unwrap();
        let (tf, th) = (t.apply_raw(&f).unwrap(), t.apply_raw(&h).unwrap());
        for i in 0..lhs.len() {
            prop_assert!((lhs[i] - (a * tf[i] + b * th[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn score_ignores_simultaneous_permutation(entries in prop::collection::vec(-1.0..1.0f64, 64), perm_seed in any::<u64>()) {
        let k = 8;
        let c = Mat::from_fn(k, k, |i, j| entries[i * k + j]);
        let w = gaussian_weights(k, k);
        let mut perm: Vec<usize> = (0..k).collect();
        let mut s = perm_seed;
        for i in (1..k).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let cp = Mat::from_fn(k, k, |i, j| c[(perm[i], perm[j])]);
        let wp = Mat::from_fn(k, k, |i, j| w[(perm[i], perm[j])]);
        let a = matching_score(c.as_ref(), w.as_ref()).unwrap();
        let b = matching_score(cp.as_ref(), wp.as_ref()).unwrap();
        prop_assert!((a.score - b.score).abs() < 1e-9);
        prop_assert_eq!(a.score, -a.literal);
    }
}

#[test]
fn identity_outranks_a_flat_map() {
    let k = 30;
    let w = gaussian_weights(k, k);
    let id = Mat::<f64>::identity(k, k);
    let ones = Mat::from_fn(k, k, |_, _| 1.0);
    // oracle: for C = I the literal value is −Σ w_ii = −k
    let s_id = matching_score(id.as_ref(), w.as_ref()).unwrap();
    assert!((s_id.literal + k as f64).abs() < 1e-12);
    assert!(s_id.score > matching_score(ones.as_ref(), w.as_ref()).unwrap().score);
}

#[test]
fn self_map_without_regularization_is_identity() {
    let basis = small_basis();
    let d = rich_descriptors(basis);
    let f = project(basis, d.as_ref()).unwrap();
    let c = solve_fmap(basis, f.as_ref(), basis, f.as_ref(), 1.0, 0.0).unwrap();
    let m = c.matrix();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let expected = if i == j { 1.0 } else { 0.0 };
            assert!((m[(i, j)] - expected).abs() < 1e-6, "c[{i},{j}] = {}", m[(i, j)]);
        }
    }
}

#[test]
fn flipped_basis_column_flips_the_map_entry() {
    let basis = small_basis();
    let flipped = basis.with_flipped_column(3);
    let d = rich_descriptors(basis);
    let f = project(&flipped, d.as_ref()).unwrap();
    let h = project(basis, d.as_ref()).unwrap();
    let c = solve_fmap(&flipped, f.as_ref(), basis, h.as_ref(), 1.0, 0.0).unwrap();
    let m = c.matrix();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let expected = if i != j { 0.0 } else if i == 3 { -1.0 } else { 1.0 };
            assert!((m[(i, j)] - expected).abs() < 1e-6);
        }
    }
}

#[test]
fn identity_transfer_reproduces_basis_functions() {
    let basis = small_basis();
    let id = FunctionalMap::identity(basis.k(), "a", "a");
    let t = FunctionTransfer::new(&id, basis, basis).unwrap();
    let phi = basis.eigenfunctions();
    let phi2: Vec<f64> = (0..basis.vertex_count()).map(|i| phi[(i, 2)]).collect();
    let g = t.apply_raw(&phi2).unwrap();
    for (a, b) in g.iter().zip(&phi2) {
        assert!((a - b).abs() < 1e-6);
    }
    let zero = t.apply(&SurfaceFunction::new("a", FunctionKind::Rif, vec![0.0; basis.vertex_count()]).unwrap()).unwrap();
    assert!(zero.values.iter().all(|&v| v == 0.0));
}

#[test]
fn zoomout_half_steps_do_not_increase_cost() {
    let p = pair();
    let k = 20;
    let mut map = p.map.truncated(k);
    for _ in 0..3 {
        // at fixed k: assignment from C, then C from the assignment
        let p2p = pointwise_from_fmap(&map, &p.src.basis, &p.tgt.basis).unwrap();
        let before = assignment_cost(&map, &p2p, &p.src.basis, &p.tgt.basis);
        let (next, _) = zoomout_step(&map, &p.src.basis, &p.tgt.basis, k).unwrap();
        let after = assignment_cost(&next, &p2p, &p.src.basis, &p.tgt.basis);
        assert!(after <= before * (1.0 + 1e-12) + 1e-15, "{after} > {before}");
        let p2p_next = pointwise_from_fmap(&next, &p.src.basis, &p.tgt.basis).unwrap();
        assert!(assignment_cost(&next, &p2p_next, &p.src.basis, &p.tgt.basis) <= after * (1.0 + 1e-12) + 1e-15);
        map = next;
    }
}
