//! Ability-based ranking of VR locomotion techniques from device telemetry
//! and impairment questionnaires.
//!
//! The pipeline runs session logs through metric extraction, dataset
//! assembly, feature selection, regression learners and grouped
//! cross-validation, ending in per-participant technique rankings.

pub mod cli;
pub mod dataset;
pub mod evaluation;
pub mod learners;
pub mod metrics;
pub mod pipeline;
pub mod questionnaire;
pub mod selection;
pub mod session;
pub mod synth;

pub use dataset::{build_dataset, Dataset, Scenario, Standardizer};
pub use evaluation::{cross_validate, group_kfold, rank_report, rank_techniques, FoldPlan, RankedList};
pub use learners::{LearnerKind, LearnerSpec, TrainedModel};
pub use session::{parse_session_log, SessionLog, TechniqueId};
