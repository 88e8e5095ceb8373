//! Stiffness and damping identification from tag pose logs.

mod differentiate;
mod estimate;
mod pipeline;
mod poselog;
mod synthetic;

pub use differentiate::{differentiate_log, differentiate_log_with, DiffOptions, StateSample, DEFAULT_WINDOW};
pub use estimate::{
    identify_damping, identify_stiffness, identify_stiffness_matrix, identify_stiffness_with_damping,
    JointwiseEstimate, DYNAMIC_VELOCITY, STATIC_VELOCITY,
};
pub use poselog::{
    poses_to_joint_angles, tag_links, PoseEntry, PoseLog, PoseLogMeta, TagInstant, ASSOCIATION_WINDOW,
    MAX_OFF_PITCH,
};
pub use synthetic::{add_pose_noise, synthetic_pose_log, PoseNoise, SyntheticConfig, SyntheticLog};
pub use pipeline::{
    joint_angle_samples, run_identification, run_identification_with, settled_start, split_at, IdentDiagnostics,
    IdentifiedParams, Identification, OffPitchPolicy, PipelineOptions, RowFilter, StaticMode,
};
