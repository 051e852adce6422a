//! Error types shared by the map, association, and pose-recovery modules.

use crate::map::ObjectId;

/// Errors produced by the core relocalization types and operations.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An object index was outside the map's range.
    #[error("object index {index} out of range for map with {len} objects")]
    IndexOutOfRange { index: usize, len: usize },

    /// Two descriptors (or a descriptor and the map's configured dimension)
    /// disagree on length.
    #[error("descriptor dimension mismatch: expected {expected}, got {got}")]
    DescriptorDimension { expected: usize, got: usize },

    /// An object id appeared more than once in one map.
    #[error("duplicate object id {id}")]
    DuplicateObjectId { id: ObjectId },

    /// An id passed by the caller does not exist in the referenced map.
    #[error("unknown object id {id} in {side} map")]
    UnknownObject { id: ObjectId, side: &'static str },

    /// An association references an object id that is missing from its map;
    /// the pool and the maps have diverged.
    #[error("inconsistent pool: association references id {id} missing from {side} map")]
    InconsistentPool { id: ObjectId, side: &'static str },

    /// A parameter or field failed validation.
    #[error("invalid {what}: {why}")]
    InvalidParameter { what: &'static str, why: String },

    /// Too few correspondences for the requested alignment mode.
    #[error("insufficient correspondences for {mode} alignment: got {got}, need {need}")]
    InsufficientCorrespondences {
        mode: &'static str,
        got: usize,
        need: usize,
    },

    /// Correspondence geometry does not constrain the requested transform.
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(&'static str),

    /// A scene or snapshot document failed to parse or violated its schema.
    #[error("malformed document: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
