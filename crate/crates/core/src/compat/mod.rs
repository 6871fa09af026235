//! Comparison-based bug detection against a reference device.

mod session;
mod similarity;

pub use session::{
    classify_operation, classify_responses, run_comparison_session, BugKey, BugKind, BugReport, ComparisonOutcome,
    ComparisonParams, Evidence, OperationClass,
};
pub use similarity::{gui_similarity, similarity_with, BlockSsim, SimilarityMetric, SimilarityScore};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompatError {
    #[error("empty image")]
    EmptyImage,
    #[error("device profiles differ in screen size, resolution or placement")]
    ProfileMismatch,
    #[error("devices on different screens before the gesture: {0:?} vs {1:?}")]
    MismatchedScreens(String, String),
}
