//! Object-centric skill transfer from a single demonstration.
//!
//! Interactions between the robot, a manipulated object and its environment
//! are stored as scalar functions over the object's surface mesh. Functional
//! maps between Laplace-Beltrami bases carry those functions to a different
//! object of the same category, and a dual-quaternion path imitation scheme
//! rebuilds end-effector trajectories that keep the demonstration's relative
//! motions.

pub mod descriptors;
pub mod fmap;
pub mod imitation;
pub mod interaction;
pub mod mesh;
pub mod pipeline;
pub mod screw;
pub mod shapes;
