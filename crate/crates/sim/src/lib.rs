//! Synthetic-scene simulation and benchmarking for object-level
//! relocalization: scene generation, incremental noisy observation,
//! dynamic-map perturbation, an exhaustive matching oracle, and a trial
//! runner reproducing the evaluation protocol.

pub mod bench;
pub mod dynamic;
pub mod error;
pub mod observe;
pub mod oracle;
pub mod scene;

pub use bench::{
    is_localization_success, mix_seed, results_to_csv, run_trials, write_csv, BenchConfig,
    TrialResult, CSV_HEADER, SUCCESS_ROT_DEG, SUCCESS_TRANS_M,
};
pub use dynamic::{make_dynamic, DynamicInfo, DynamicSpec};
pub use error::{Result, SimError};
pub use observe::{derive_observation, Observation, ObservationSpec};
pub use oracle::{oracle_best_matching, oracle_best_matching_with_limit, DEFAULT_ORACLE_LIMIT};
pub use scene::{generate_scene, ClassCount, Extent, SceneMeta, SceneSpec};
