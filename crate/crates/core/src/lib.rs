//! Object-level relocalization against a prior semantic map.
//!
//! The engine matches a locally observed set of semantic objects to an
//! object-level global map. Correspondence hypotheses are grown by
//! hierarchical clustering under a relative-distance-ratio compatibility
//! metric ([`assoc`]), and the camera pose is recovered from the winning
//! association set by closed-form rigid alignment ([`pose`]).

pub mod assoc;
pub mod error;
pub mod map;
pub mod pose;

pub use assoc::{
    canonical_score, cross_pairs, init_singletons, merge_metric, try_merge, AssociationPool,
    AssociationSet, ClusterParams, PairAssociation,
};
pub use error::{Error, Result};
pub use map::{descriptor_distance, ObjectId, ObjectMap, ObjectRecord};
pub use pose::{estimate_pose, pose_error, AlignmentMode, Pose, PoseEstimate};
