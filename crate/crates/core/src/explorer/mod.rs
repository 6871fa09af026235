//! Exploration policy and the perceive-decide-act loop.

mod perception;
mod policy;
mod run;

pub use perception::{locate, perceive, Observer, Perception, PerceptionCache, PerceptionParams};
pub use policy::{
    compatible_gestures, median_spacing, sample_edge_point, screen_signature, select_gesture_for, select_target,
    visit_key, ExplorationHistory, Strategy, Target, Variant, VisitKey,
};
pub use run::{
    draw_overlay, run_exploration, Budget, Decision, ExplorationTrace, Explorer, Observation, PlannedStep,
    RunContext, RunMetrics, StepRecord, FAILED_STEP_SECONDS, MASKED,
};

use thiserror::Error;

use crate::kinematics::KinematicsError;
use crate::vision::VisionError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExploreError {
    #[error("no widgets and no screen-level gesture allowed")]
    NoWidgets,
    #[error(transparent)]
    Vision(#[from] VisionError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}
