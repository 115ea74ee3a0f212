use kdtree::distance::squared_euclidean;
use kdtree::KdTree;
use nalgebra::{Matrix3, Matrix4, Point3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ImitationError;
use crate::screw::{Quaternion, UnitDualQuaternion, UnitQuaternion};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpParams {
    pub max_iters: usize,
    /// Stop once the RMS improves by less than this (m).
    pub tolerance: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self { max_iters: 50, tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// Takes match-support points onto the sel support.
    pub transform: UnitDualQuaternion,
    /// RMS over the given correspondences after the closed-form fit.
    pub closed_form_rms: f64,
    /// Nearest-neighbour RMS before the first and after every ICP iteration.
    pub rms_history: Vec<f64>,
}

/// Least-squares rigid transform with `dst ≈ x(src)`, via the unit
/// quaternion of largest eigenvalue of Horn's 4×4 matrix.
pub fn horn_fit(src: &[Point3<f64>], dst: &[Point3<f64>]) -> Result<UnitDualQuaternion, ImitationError> {
    if src.len() != dst.len() {
        return Err(ImitationError::InvalidParameter(format!("{} source points, {} targets", src.len(), dst.len())));
    }
    check_spread(src)?;
    let ca = centroid(src);
    let cb = centroid(dst);
    let mut s = Matrix3::zeros();
    for (a, b) in src.iter().zip(dst) {
        s += (a - ca) * (b - cb).transpose();
    }
    let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
    let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
    let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
    #[rustfmt::skip]
    let n = Matrix4::new(
        sxx + syy + szz, syz - szy,        szx - sxz,        sxy - syx,
        syz - szy,       sxx - syy - szz,  sxy + syx,        szx + sxz,
        szx - sxz,       sxy + syx,        -sxx + syy - szz, syz + szy,
        sxy - syx,       szx + sxz,        syz + szy,        -sxx - syy + szz,
    );
    let eig = SymmetricEigen::new(n);
    let top = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(top);
    let q = UnitQuaternion::normalize(Quaternion::new(v[0], v[1], v[2], v[3]));
    let t = cb.coords - q.rotate(&ca.coords);
    Ok(UnitDualQuaternion::from_pose(&t, &q))
}

/// Aligns the match support to the sel support: closed-form fit on the
/// given correspondences (`correspondence[i]` is the sel point paired with
/// match point `i`), then point-to-point ICP.
pub fn align_supports(
    match_points: &[Point3<f64>],
    sel_points: &[Point3<f64>],
    correspondence: &[usize],
    params: &IcpParams,
) -> Result<Alignment, ImitationError> {
    if correspondence.len() != match_points.len() {
        return Err(ImitationError::InvalidParameter(format!(
            "{} correspondences for {} points",
            correspondence.len(),
            match_points.len()
        )));
    }
    if let Some(&bad) = correspondence.iter().find(|&&j| j >= sel_points.len()) {
        return Err(ImitationError::InvalidParameter(format!("correspondence index {bad} out of range")));
    }
    check_spread(sel_points)?;
    let paired: Vec<Point3<f64>> = correspondence.iter().map(|&j| sel_points[j]).collect();
    let mut x = horn_fit(match_points, &paired)?;
    let closed_form_rms = rms(&x, match_points, &paired);

    let mut tree = KdTree::with_capacity(3, 16);
    for (i, p) in sel_points.iter().enumerate() {
        tree.add([p.x, p.y, p.z], i).map_err(|e| ImitationError::DegenerateSupport(format!("{e:?}")))?;
    }
    let nearest = |x: &UnitDualQuaternion| -> (Vec<Point3<f64>>, f64) {
        let hits: Vec<(Point3<f64>, f64)> = match_points
            .par_iter()
            .map(|p| {
                let q = x.transform_point(p);
                let found = tree.nearest(&[q.x, q.y, q.z], 1, &squared_euclidean).expect("finite points");
                (sel_points[*found[0].1], found[0].0)
            })
            .collect();
        let err = (hits.iter().map(|h| h.1).sum::<f64>() / hits.len() as f64).sqrt();
        (hits.into_iter().map(|h| h.0).collect(), err)
    };

    let (mut targets, mut err) = nearest(&x);
    let mut rms_history = vec![err];
    for _ in 0..params.max_iters {
        let next = horn_fit(match_points, &targets)?;
        let (t2, e2) = nearest(&next);
        if e2 > err {
            break;
        }
        x = next;
        targets = t2;
        let gain = err - e2;
        err = e2;
        rms_history.push(err);
        if gain < params.tolerance {
            break;
        }
    }
    Ok(Alignment { transform: x, closed_form_rms, rms_history })
}

fn centroid(p: &[Point3<f64>]) -> Point3<f64> {
    let s: Vector3<f64> = p.iter().map(|q| q.coords).sum();
    Point3::from(s / p.len() as f64)
}

fn rms(x: &UnitDualQuaternion, src: &[Point3<f64>], dst: &[Point3<f64>]) -> f64 {
    let s: f64 = src.iter().zip(dst).map(|(a, b)| (x.transform_point(a) - b).norm_squared()).sum();
    (s / src.len() as f64).sqrt()
}

/// Rejects point sets that are empty, coincident or collinear.
fn check_spread(p: &[Point3<f64>]) -> Result<(), ImitationError> {
    if p.len() < 3 {
        return Err(ImitationError::DegenerateSupport(format!("{} points", p.len())));
    }
    let c = centroid(p);
    let mut cov = Matrix3::zeros();
    for q in p {
        let d = q - c;
        cov += d * d.transpose();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let scale = p.iter().map(|q| q.coords.norm_squared()).fold(0.0, f64::max).max(1.0) * p.len() as f64;
    if ev[0] <= 1e-24 * scale {
        return Err(ImitationError::DegenerateSupport("coincident points".into()));
    }
    if ev[1] <= 1e-12 * ev[0] {
        return Err(ImitationError::DegenerateSupport("collinear points".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, seed: u64) -> Vec<Point3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Point3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.05..0.05), rng.random_range(0.0..0.2))).collect()
    }

    fn known() -> UnitDualQuaternion {
        UnitDualQuaternion::from_pose(&Vector3::new(0.3, -0.1, 0.05), &UnitQuaternion::from_axis_angle(&Vector3::new(1.0, 2.0, 0.5), 0.6))
    }

    #[test]
    fn recovers_known_transform() {
        let a = cloud(200, 1);
        let x = known();
        let b: Vec<_> = a.iter().map(|p| x.transform_point(p)).collect();
        let ids: Vec<usize> = (0..a.len()).collect();
        let al = align_supports(&a, &b, &ids, &IcpParams::default()).unwrap();
        assert!(al.closed_form_rms < 1e-12);
        for p in &a {
            assert!((al.transform.transform_point(p) - x.transform_point(p)).norm() < 1e-9);
        }
    }

    #[test]
    fn icp_repairs_bad_pairs() {
        let a = cloud(300, 2);
        let x = known();
        let b: Vec<_> = a.iter().map(|p| x.transform_point(p)).collect();
        let mut ids: Vec<usize> = (0..a.len()).collect();
        // 5% wrong pairs
        for i in (0..a.len()).step_by(20) {
            ids[i] = (i + 150) % a.len();
        }
        let al = align_supports(&a, &b, &ids, &IcpParams::default()).unwrap();
        for w in al.rms_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let truth = rms(&al.transform, &a, &b);
        let biased = horn_fit(&a, &ids.iter().map(|&j| b[j]).collect::<Vec<_>>()).unwrap();
        assert!(truth < rms(&biased, &a, &b));
    }

    #[test]
    fn degenerate_supports() {
        let line: Vec<_> = (0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let ids: Vec<usize> = (0..10).collect();
        assert!(matches!(align_supports(&line, &line, &ids, &IcpParams::default()), Err(ImitationError::DegenerateSupport(_))));
        let same = vec![Point3::new(1.0, 1.0, 1.0); 5];
        assert!(matches!(horn_fit(&same, &same), Err(ImitationError::DegenerateSupport(_))));
        assert!(horn_fit(&[], &[]).is_err());
    }
}
