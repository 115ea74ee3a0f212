mod common;

use common::pose;
use nalgebra::Vector3;
use proptest::prelude::*;
use skill_transfer::interaction::{apply_task_displacement, compute_eif, compute_rif, ContactSet, PlaneModel};
use skill_transfer::mesh::TriangleMesh;
use skill_transfer::shapes;

fn mesh() -> TriangleMesh {
    shapes::bottle(&shapes::BottleParams::default(), 24, 18)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn rif_is_rigidly_invariant(x in pose(), a in 0usize..400, b in 0usize..400, lambda in 0.005..0.06f64) {
        let m = mesh();
        let (a, b) = (a % m.vertex_count(), b % m.vertex_count());
        let contacts = ContactSet::new().with_finger("l", vec![m.vertices()[a]]).with_finger("r", vec![m.vertices()[b]]);
        let rif = compute_rif(&m, &contacts, lambda).unwrap();
        let moved = apply_task_displacement(&m, &x);
        let rif2 = compute_rif(&moved, &contacts.transformed(&x), lambda).unwrap();
        for (u, v) in rif.values.iter().zip(&rif2.values) {
            prop_assert!((u - v).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(u));
        }
        prop_assert_eq!(rif.values[a], 1.0);
        // oracle: direct evaluation of the decay formula
        let p = m.vertices();
        for (i, v) in rif.values.iter().enumerate() {
            let d = (p[i] - p[a]).norm().min((p[i] - p[b]).norm());
            prop_assert!((v - (1.0 - d / lambda).max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn eif_grows_with_the_slab(h in -0.01..0.05f64, l1 in 0.0001..0.05f64, l2 in 0.0001..0.05f64) {
        let m = mesh();
        let plane = PlaneModel::horizontal(h);
        let (lo, hi) = (l1.min(l2), l1.max(l2));
        let a = compute_eif(&m, &plane, lo).unwrap();
        let b = compute_eif(&m, &plane, hi).unwrap();
        for ((u, v), p) in a.values.iter().zip(&b.values).zip(m.vertices()) {
            prop_assert!(u <= v);
            prop_assert_eq!(*u == 1.0, p.z - h <= lo);
        }
    }
}

#[test]
fn eif_on_a_displaced_cube() {
    // a cube lifted 2 cm does not touch the table; put back down it does
    let cube = shapes::cuboid(0.05, 0.05, 0.05, 5);
    let lifted = cube.map_vertices(|p| p + Vector3::new(0.0, 0.0, 0.02));
    let table = PlaneModel::horizontal(0.0);
    assert!(compute_eif(&lifted, &table, 0.005).unwrap().values.iter().all(|&v| v == 0.0));
    let on = compute_eif(&cube, &table, 0.005).unwrap();
    let bottom = cube.vertices().iter().filter(|p| p.z == 0.0).count();
    assert_eq!(on.values.iter().filter(|&&v| v == 1.0).count(), bottom);
    assert!(bottom > 0);
}
