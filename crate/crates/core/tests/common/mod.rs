#![allow(dead_code)]

use nalgebra::Vector3;
use proptest::prelude::*;
use skill_transfer::imitation::Trajectory;
use skill_transfer::screw::{UnitDualQuaternion, UnitQuaternion};

pub fn pose_from(axis: [f64; 3], angle: f64, t: [f64; 3]) -> UnitDualQuaternion {
    let a = Vector3::from(axis);
    let a = if a.norm() < 1e-3 { Vector3::z() } else { a };
    UnitDualQuaternion::from_pose(&Vector3::from(t), &UnitQuaternion::from_axis_angle(&a, angle))
}

pub fn pose() -> impl Strategy<Value = UnitDualQuaternion> {
    (prop::array::uniform3(-1.0..1.0f64), -3.1..3.1f64, prop::array::uniform3(-2.0..2.0f64)).prop_map(|(a, th, t)| pose_from(a, th, t))
}

/// Small relative motion, as between consecutive waypoints.
pub fn step() -> impl Strategy<Value = UnitDualQuaternion> {
    (prop::array::uniform3(-1.0..1.0f64), -0.4..0.4f64, prop::array::uniform3(-0.05..0.05f64)).prop_map(|(a, th, t)| pose_from(a, th, t))
}

pub fn trajectory(max_len: usize) -> impl Strategy<Value = Trajectory> {
    (pose(), prop::collection::vec(step(), 1..max_len)).prop_map(|(x0, steps)| {
        let mut poses = vec![x0];
        for s in steps {
            let last = *poses.last().unwrap();
            poses.push(last * s);
        }
        Trajectory::new(poses).unwrap()
    })
}

/// Rotation matrix oracle for a unit quaternion `[w, x, y, z]`.
pub fn rotation_matrix(q: [f64; 4]) -> nalgebra::Matrix3<f64> {
    nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3])).to_rotation_matrix().into_inner()
}
