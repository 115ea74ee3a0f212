//! End-to-end orchestration: demonstration bundles, scenes, the imitation
//! workflow and its evaluation.

mod bundle;
mod report;
mod run;
mod verify;
pub mod synthetic;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::{DescriptorError, WksParams};
use crate::fmap::{FmapError, FmapParams};
use crate::imitation::{BlendParams, IcpParams, ImitationError, DEFAULT_CONE_ANGLE};
use crate::interaction::{InteractionError, DEFAULT_LAMBDA_D, DEFAULT_LAMBDA_P};
use crate::mesh::{EigenConfig, MeshError};

pub use bundle::{
    load_bundle, load_trajectory, persist_bundle, record_bundle, DemonstrationBundle, OperationInput, RecordManifest, Scene, SkillRecord,
    BUNDLE_FILE,
};
pub use report::{
    evaluate_transfer, read_function_csv, timing_report, write_function_csv, EvaluationReport, FunctionError, StageTiming, TimingReport,
};
pub use verify::{random_pose, run_invariants, Check};
pub use run::{
    evaluate, imitate, load_scene, match_operation, prepare_shape, transfer_operation, ImitationOutput, ImitationReport, MatchOutcome,
    NewScene, OperationReport, PreparedShape, SCENE_FILE,
};

/// Pipeline stages, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Load,
    Record,
    Basis,
    Descriptors,
    Selection,
    Refinement,
    Transfer,
    GraspRegion,
    Grasp,
    Alignment,
    Goals,
    Evaluation,
}

impl Stage {
    /// Stages that belong to functional-map estimation.
    pub fn is_fmap(self) -> bool {
        matches!(self, Stage::Selection | Stage::Refinement)
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Load => "load",
            Stage::Record => "record",
            Stage::Basis => "basis",
            Stage::Descriptors => "descriptors",
            Stage::Selection => "selection",
            Stage::Refinement => "refinement",
            Stage::Transfer => "transfer",
            Stage::GraspRegion => "grasp_region",
            Stage::Grasp => "grasp",
            Stage::Alignment => "alignment",
            Stage::Goals => "goals",
            Stage::Evaluation => "evaluation",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Error, Debug)]
pub enum PipelineError {
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },

    #[error("bundle inconsistent: {0}")]
    BundleInconsistent(String),

    #[error("function has {found} values, ground truth has {expected}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("{stage} stage: {source}")]
    Mesh { stage: Stage, source: MeshError },

    #[error("{stage} stage: {source}")]
    Descriptor { stage: Stage, source: DescriptorError },

    #[error("{stage} stage: {source}")]
    Fmap { stage: Stage, source: FmapError },

    #[error("{stage} stage: {source}")]
    Interaction { stage: Stage, source: InteractionError },

    #[error("{stage} stage: {source}")]
    Imitation { stage: Stage, source: ImitationError },
}

impl PipelineError {
    pub fn input(path: impl Into<PathBuf>, message: impl fmt::Display) -> Self {
        Self::Input { path: path.into(), message: message.to_string() }
    }

    /// 2 for bad input, 3 for numerical failure, 4 when no grasp survives.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Input { .. } | Self::BundleInconsistent(_) | Self::LengthMismatch { .. } | Self::Interaction { .. } => 2,
            Self::Mesh { source, .. } => match source {
                MeshError::NumericalDegeneracy { .. } | MeshError::SolverFailure(_) => 3,
                _ => 2,
            },
            Self::Descriptor { source, .. } => match source {
                DescriptorError::DegenerateSpectrum { .. } => 3,
                _ => 2,
            },
            Self::Fmap { source, .. } => match source {
                FmapError::RankDeficiency { .. } => 3,
                _ => 2,
            },
            Self::Imitation { source, .. } => match source {
                ImitationError::NoFeasibleGrasp { .. } => 4,
                ImitationError::NonConvergence { .. } | ImitationError::DegenerateSupport(_) => 3,
                _ => 2,
            },
        }
    }
}

pub(crate) trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

macro_rules! at_stage {
    ($err:ty, $variant:ident) => {
        impl<T> AtStage<T> for Result<T, $err> {
            fn at(self, stage: Stage) -> Result<T, PipelineError> {
                self.map_err(|source| PipelineError::$variant { stage, source })
            }
        }
    };
}

at_stage!(MeshError, Mesh);
at_stage!(DescriptorError, Descriptor);
at_stage!(FmapError, Fmap);
at_stage!(InteractionError, Interaction);
at_stage!(ImitationError, Imitation);

/// Thresholds and solver settings shared by recording and imitation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// RIF decay radius (m).
    pub lambda_d: f64,
    /// EIF slab thickness (m).
    pub lambda_p: f64,
    /// Transferred RIF values at or above this form the grasp region.
    pub delta: f64,
    /// Approach cone half-angle (rad).
    pub theta: f64,
    pub fmap: FmapParams,
    pub wks: WksParams,
    pub blend: BlendParams,
    pub icp: IcpParams,
    /// Seeds the eigensolver starting block.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            lambda_d: DEFAULT_LAMBDA_D,
            lambda_p: DEFAULT_LAMBDA_P,
            delta: 0.5,
            theta: DEFAULT_CONE_ANGLE,
            fmap: FmapParams::default(),
            wks: WksParams::default(),
            blend: BlendParams::default(),
            icp: IcpParams::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn eigen(&self) -> EigenConfig {
        EigenConfig { seed: self.seed, ..EigenConfig::default() }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |what: &str, v: f64| PipelineError::BundleInconsistent(format!("{what} = {v} is out of range"));
        if !(self.lambda_d > 0.0) {
            return Err(bad("lambda_d", self.lambda_d));
        }
        if !(self.lambda_p > 0.0) {
            return Err(bad("lambda_p", self.lambda_p));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(bad("delta", self.delta));
        }
        if !(self.theta >= 0.0 && self.theta <= std::f64::consts::PI) {
            return Err(bad("theta", self.theta));
        }
        let f = &self.fmap;
        if f.k_init == 0 || f.k_final < f.k_init || f.step == 0 || f.descr_stride == 0 {
            return Err(PipelineError::BundleInconsistent(format!(
                "map sizes k_init={} k_final={} step={} stride={}",
                f.k_init, f.k_final, f.step, f.descr_stride
            )));
        }
        Ok(())
    }
}
