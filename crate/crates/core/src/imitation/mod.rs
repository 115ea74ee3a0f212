//! Task-space path imitation with dual quaternions, grasp selection and
//! support alignment for the new scene.

mod align;
mod grasp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::screw::{ScrewError, UnitDualQuaternion, Waypoint};

pub use align::{align_supports, horn_fit, Alignment, IcpParams};
pub use grasp::{filter_grasps, GraspCandidate, DEFAULT_CONE_ANGLE};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ImitationError {
    #[error("trajectory needs at least {needed} poses, got {found}")]
    TooShort { needed: usize, found: usize },

    #[error("blending stalled at guide pose {guide} after {iterations} steps")]
    NonConvergence { guide: usize, iterations: usize },

    #[error("no grasp candidate survives the feasibility and cone filters ({candidates} candidates)")]
    NoFeasibleGrasp { candidates: usize },

    #[error("degenerate support: {0}")]
    DegenerateSupport(String),

    #[error("{goals} goals need {expected} demonstrated segments, got {found}")]
    SegmentCount { goals: usize, expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Screw(#[from] ScrewError),
}

/// Ordered end-effector poses, optionally time-stamped (s).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: Vec<UnitDualQuaternion>,
    timestamps: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn new(poses: Vec<UnitDualQuaternion>) -> Result<Self, ImitationError> {
        if poses.len() < 2 {
            return Err(ImitationError::TooShort { needed: 2, found: poses.len() });
        }
        Ok(Self { poses, timestamps: None })
    }

    pub fn with_timestamps(mut self, t: Vec<f64>) -> Result<Self, ImitationError> {
        if t.len() != self.poses.len() {
            return Err(ImitationError::InvalidParameter(format!("{} timestamps for {} poses", t.len(), self.poses.len())));
        }
        self.timestamps = Some(t);
        Ok(self)
    }

    pub fn poses(&self) -> &[UnitDualQuaternion] {
        &self.poses
    }

    pub fn timestamps(&self) -> Option<&[f64]> {
        self.timestamps.as_deref()
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn first(&self) -> &UnitDualQuaternion {
        &self.poses[0]
    }

    pub fn last(&self) -> &UnitDualQuaternion {
        &self.poses[self.poses.len() - 1]
    }
}

#[derive(Serialize, Deserialize)]
struct TrajectoryJson {
    waypoints: Vec<Waypoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    timestamps: Option<Vec<f64>>,
}

impl Serialize for Trajectory {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        TrajectoryJson { waypoints: self.poses.iter().map(|p| p.to_waypoint()).collect(), timestamps: self.timestamps.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Trajectory {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = TrajectoryJson::deserialize(d)?;
        let poses = raw.waypoints.iter().map(|w| w.to_pose()).collect::<Result<Vec<_>, _>>().map_err(serde::de::Error::custom)?;
        let traj = Trajectory::new(poses).map_err(serde::de::Error::custom)?;
        match raw.timestamps {
            Some(t) => traj.with_timestamps(t).map_err(serde::de::Error::custom),
            None => Ok(traj),
        }
    }
}

/// `δ_i = x*_{i−1} x_i` for `i = 1..n`.
pub fn path_deltas(path: &Trajectory) -> Vec<UnitDualQuaternion> {
    path.poses.windows(2).map(|w| w[0].conj() * w[1]).collect()
}

/// Chains the deltas backwards from `goal`: `x'_{i−1} = x'_i δ_i*`, so the
/// result ends exactly at `goal` and has the same deltas.
pub fn imitate_path(deltas: &[UnitDualQuaternion], goal: &UnitDualQuaternion) -> Result<Trajectory, ImitationError> {
    if deltas.is_empty() {
        return Err(ImitationError::TooShort { needed: 1, found: 0 });
    }
    let mut poses = vec![*goal; deltas.len() + 1];
    for i in (1..=deltas.len()).rev() {
        poses[i - 1] = poses[i] * deltas[i - 1].conj();
    }
    Trajectory::new(poses)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlendParams {
    /// ScLERP fraction per step toward the guiding pose.
    pub tau_step: f64,
    /// The guide advances once the pose is this close in translation (m).
    pub capture_radius: f64,
    /// Steps allowed without the guide advancing.
    pub max_iters: usize,
}

impl Default for BlendParams {
    fn default() -> Self {
        Self { tau_step: 0.1, capture_radius: 0.005, max_iters: 2000 }
    }
}

/// Reference poses from `start` into the imitated path.
///
/// Each step moves a fraction `tau_step` along the screw toward the current
/// guide `x'_i`; the guide advances when the translation gap drops below the
/// capture radius. The output starts with `start` and ends with the exact
/// final pose of the path.
pub fn blend_to_path(start: &UnitDualQuaternion, path: &Trajectory, params: &BlendParams) -> Result<Vec<UnitDualQuaternion>, ImitationError> {
    if !(params.tau_step > 0.0 && params.tau_step <= 1.0) {
        return Err(ImitationError::InvalidParameter(format!("tau_step {} outside (0, 1]", params.tau_step)));
    }
    if !(params.capture_radius > 0.0) {
        return Err(ImitationError::InvalidParameter(format!("capture_radius {} must be positive", params.capture_radius)));
    }
    let guides = path.poses();
    let last = guides.len() - 1;
    let mut out = vec![*start];
    let mut current = *start;
    let mut guide = 0;
    let mut stalled = 0;
    loop {
        while guide < last && current.translation_distance(&guides[guide]) < params.capture_radius {
            guide += 1;
            stalled = 0;
        }
        if guide == last && current.translation_distance(&guides[last]) < params.capture_radius {
            break;
        }
        if stalled >= params.max_iters {
            return Err(ImitationError::NonConvergence { guide, iterations: stalled });
        }
        current = UnitDualQuaternion::sclerp(&current, &guides[guide], params.tau_step);
        out.push(current);
        stalled += 1;
    }
    if out.last() != Some(&guides[last]) {
        out.push(guides[last]);
    }
    Ok(out)
}

/// `x_task = x_init* x_end` and `x_eff_n = g_eff x_task`.
pub fn final_poses(
    x_obj_init: &UnitDualQuaternion,
    x_obj_end: &UnitDualQuaternion,
    g_eff: &UnitDualQuaternion,
) -> (UnitDualQuaternion, UnitDualQuaternion) {
    let task = x_obj_init.conj() * *x_obj_end;
    (task, *g_eff * task)
}

/// Inclusive waypoint range of one goal-to-goal segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSpan {
    pub start: usize,
    pub end: usize,
}

/// Concatenated reference poses with segment boundaries; consecutive
/// segments share their junction waypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutableTrajectory {
    pub segments: Vec<SegmentSpan>,
    pub waypoints: Vec<UnitDualQuaternion>,
}

#[derive(Serialize, Deserialize)]
struct ExecutableJson {
    segments: Vec<SegmentSpan>,
    waypoints: Vec<Waypoint>,
}

impl Serialize for ExecutableTrajectory {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ExecutableJson { segments: self.segments.clone(), waypoints: self.waypoints.iter().map(|w| w.to_waypoint()).collect() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ExecutableTrajectory {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = ExecutableJson::deserialize(d)?;
        let waypoints = raw.waypoints.iter().map(|w| w.to_pose()).collect::<Result<Vec<_>, _>>().map_err(serde::de::Error::custom)?;
        Ok(Self { segments: raw.segments, waypoints })
    }
}

/// Goals closer than this (componentwise, up to sign) count as equal.
pub const GOAL_EPSILON: f64 = 1e-12;

/// Builds the executable trajectory through `goals`.
///
/// `demos[i]` is the demonstrated path for the move from `goals[i]` to
/// `goals[i + 1]`. Each segment imitates its demonstration anchored at the
/// next goal and is blended in from the previous segment's end. Moves
/// between equal goals are skipped; if every goal is equal the result is
/// the single start pose.
pub fn build_goal_list(goals: &[UnitDualQuaternion], demos: &[&Trajectory], params: &BlendParams) -> Result<ExecutableTrajectory, ImitationError> {
    if goals.is_empty() {
        return Err(ImitationError::TooShort { needed: 1, found: 0 });
    }
    if demos.len() + 1 != goals.len() {
        return Err(ImitationError::SegmentCount { goals: goals.len(), expected: goals.len() - 1, found: demos.len() });
    }
    let mut waypoints = vec![goals[0]];
    let mut segments = Vec::new();
    for (i, demo) in demos.iter().enumerate() {
        let (from, to) = (&goals[i], &goals[i + 1]);
        if from.approx_eq(to, GOAL_EPSILON) {
            continue;
        }
        let imitated = imitate_path(&path_deltas(demo), to)?;
        let start = *waypoints.last().expect("non-empty");
        let blended = blend_to_path(&start, &imitated, params)?;
        let first = waypoints.len() - 1;
        waypoints.extend_from_slice(&blended[1..]);
        segments.push(SegmentSpan { start: first, end: waypoints.len() - 1 });
    }
    Ok(ExecutableTrajectory { segments, waypoints })
}

/// Goal list `[x_0, g_eff, x_eff_n]` for a grasp-and-move skill.
pub fn grasp_goals(x0: &UnitDualQuaternion, g_eff: &UnitDualQuaternion, x_eff_n: &UnitDualQuaternion) -> Vec<UnitDualQuaternion> {
    vec![*x0, *g_eff, *x_eff_n]
}
