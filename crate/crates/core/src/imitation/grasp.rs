use std::cmp::Ordering;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::ImitationError;
use crate::screw::{UnitDualQuaternion, Waypoint};

/// Half-angle of the approach cone around the demonstrated approach (rad).
pub const DEFAULT_CONE_ANGLE: f64 = std::f64::consts::PI / 6.0;

/// Grasp pose proposed by an external grasp detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspCandidate {
    #[serde(with = "pose_json")]
    pub pose: UnitDualQuaternion,
    pub score: f64,
    /// Unit approach direction in the world frame.
    pub approach: [f64; 3],
}

mod pose_json {
    use super::*;

    pub fn serialize<S: serde::Serializer>(p: &UnitDualQuaternion, s: S) -> Result<S::Ok, S::Error> {
        p.to_waypoint().serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<UnitDualQuaternion, D::Error> {
        Waypoint::deserialize(d)?.to_pose().map_err(serde::de::Error::custom)
    }
}

impl GraspCandidate {
    pub fn approach(&self) -> Vector3<f64> {
        Vector3::from(self.approach)
    }

    fn key(&self) -> [f64; 7] {
        let w = self.pose.to_waypoint();
        [w.t[0], w.t[1], w.t[2], w.q[0], w.q[1], w.q[2], w.q[3]]
    }
}

/// Keeps feasible candidates whose approach lies within `cone_angle` of the
/// demonstrated approach `a_dem` and returns the highest-scoring one.
///
/// Ties break on the pose components (lexicographic), so the result does
/// not depend on the candidate order.
pub fn filter_grasps(
    candidates: &[GraspCandidate],
    a_dem: &Vector3<f64>,
    cone_angle: f64,
    feasible: impl Fn(&GraspCandidate) -> bool,
) -> Result<GraspCandidate, ImitationError> {
    let a = a_dem
        .try_normalize(1e-12)
        .ok_or_else(|| ImitationError::InvalidParameter("zero demonstrated approach".into()))?;
    let cos_min = cone_angle.cos();
    candidates
        .iter()
        .filter(|g| {
            let d = g.approach();
            let n = d.norm();
            n > 0.0 && d.dot(&a) / n >= cos_min && feasible(g)
        })
        .max_by(|x, y| match x.score.total_cmp(&y.score) {
            Ordering::Equal => y.key().iter().zip(x.key()).map(|(p, q)| p.total_cmp(&q)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal),
            o => o,
        })
        .cloned()
        .ok_or(ImitationError::NoFeasibleGrasp { candidates: candidates.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(x: f64, score: f64, approach: [f64; 3]) -> GraspCandidate {
        GraspCandidate { pose: UnitDualQuaternion::from_translation(&Vector3::new(x, 0.0, 0.0)), score, approach }
    }

    #[test]
    fn cone_and_score() {
        let down = Vector3::new(0.0, 0.0, -1.0);
        let c = vec![cand(0.0, 0.9, [1.0, 0.0, 0.0]), cand(1.0, 0.5, [0.1, 0.0, -1.0]), cand(2.0, 0.7, [0.0, 0.2, -1.0])];
        let best = filter_grasps(&c, &down, DEFAULT_CONE_ANGLE, |_| true).unwrap();
        assert_eq!(best, c[2]);
        let best = filter_grasps(&c, &down, DEFAULT_CONE_ANGLE, |g| g.score < 0.6).unwrap();
        assert_eq!(best, c[1]);
        assert!(matches!(
            filter_grasps(&c, &down, DEFAULT_CONE_ANGLE, |_| false),
            Err(ImitationError::NoFeasibleGrasp { candidates: 3 })
        ));
    }

    #[test]
    fn ties_are_order_independent() {
        let down = Vector3::new(0.0, 0.0, -1.0);
        let mut c = vec![cand(0.2, 0.5, [0.0, 0.0, -1.0]), cand(0.1, 0.5, [0.0, 0.0, -1.0]), cand(0.3, 0.5, [0.0, 0.0, -1.0])];
        let a = filter_grasps(&c, &down, DEFAULT_CONE_ANGLE, |_| true).unwrap();
        c.reverse();
        let b = filter_grasps(&c, &down, DEFAULT_CONE_ANGLE, |_| true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pose.translation().x, 0.1);
    }

    #[test]
    fn json() {
        let g = cand(0.5, 0.25, [0.0, 0.0, -1.0]);
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"pose":{"t":[0.5,0.0,0.0],"q":[1.0,0.0,0.0,0.0]},"score":0.25,"approach":[0.0,0.0,-1.0]}"#);
        assert_eq!(serde_json::from_str::<GraspCandidate>(&s).unwrap(), g);
    }
}
